#pragma once

#include <string>
#include <vector>

#include "tokalign/config.hpp"
#include "tokalign/manifest.hpp"
#include "tokalign/params.hpp"
#include "tokalign/synth.hpp"
#include "tokalign/text.hpp"

namespace tokalign {

struct Utterance {
    std::string id;
    Matrix features;       // normalized n x n_mels
    TokenSequence tokens;  // empty for label-only records
    Matrix teacher;        // m x d, empty when absent
    int label = -1;
    SpanList spans;
    std::string split = "train";
};

struct Dataset {
    std::vector<Utterance> utterances;
    Vocab vocab;
    std::vector<size_t> train_idx;
    std::vector<size_t> dev_idx;
};

// Loads features/tokens/teacher files referenced by a manifest. Teacher row
// counts are validated against tokenization (alignment error on drift).
Dataset load_dataset(const std::string& manifest_path, const std::string& vocab_path,
                     bool need_teacher, const std::string& spans_path = "");

void init_model_params(ParameterStore& params, const RunConfig& cfg, int vocab_size);
void init_classifier_params(ParameterStore& params, int d, int n_classes);

// Fraction of rows i whose nearest teacher row (cosine) is row i.
double token_retrieval_accuracy(const Matrix& teacher, const Matrix& speech);
// Fraction of spans whose attention argmax lies within +-window of the
// expected key index.
double diagonality_score(const Matrix& attn, const SpanList& spans, int window = 2);

struct PretrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double retrieval_acc = 0.0;   // held-out, per-utterance batches
    double diag_score = 0.0;      // held-out mean
    std::string checkpoint_path;
};

// Runs the pretraining loop, appending JSON metrics lines and writing the
// final checkpoint (with optimizer state) under out_dir. resume_from
// continues bit-exactly from a saved checkpoint.
PretrainResult pretrain_run(const Dataset& data, const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from = "");

// One optimizer step over explicit utterance indices; exposed for tests.
double pretrain_step(ParameterStore& params, AdamW& opt, const Dataset& data,
                     const std::vector<size_t>& batch, const RunConfig& cfg, int step);

struct EvalReport {
    double retrieval_acc = 0.0;
    double diag_score = 0.0;
    double utterance_retrieval_acc = 0.0;  // pooled-speech vs teacher [CLS]
};
EvalReport evaluate_alignment(ParameterStore& params, const Dataset& data,
                              const std::vector<size_t>& indices, const RunConfig& cfg);

struct FinetuneResult {
    std::vector<double> val_acc_per_epoch;
    double best_val_acc = 0.0;
    int best_epoch = -1;
    double initial_train_loss = 0.0;
    std::string checkpoint_path;
};

// Fine-tunes end to end ([CLS]-only path + linear classifier). init_from
// loads a pretrained checkpoint; empty string trains from random init.
FinetuneResult finetune_run(const Dataset& data, const RunConfig& cfg, const std::string& out_dir,
                            const std::string& init_from);

double finetune_step(ParameterStore& params, AdamW& opt, const Dataset& data,
                     const std::vector<size_t>& batch, const RunConfig& cfg, uint64_t step_seed);

double evaluate_accuracy(ParameterStore& params, const Dataset& data,
                         const std::vector<size_t>& indices, const RunConfig& cfg);

// Inference-mode cross-modal attention matrix for one utterance.
Matrix export_attention(ParameterStore& params, const Utterance& utt, const RunConfig& cfg);

}  // namespace tokalign
