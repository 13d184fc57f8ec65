#include "tokalign/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "tokalign/contrastive.hpp"
#include "tokalign/cross_modal.hpp"
#include "tokalign/encoder.hpp"
#include "tokalign/kernels.hpp"

namespace tokalign {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
    uint64_t x = a * 0x9E3779B97F4A7C15ULL + b * 0xC2B2AE3D27D4EB4FULL + c + 0x165667B19E3779F9ULL;
    x ^= x >> 29;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 32;
    return x;
}

struct UttForward {
    int speech;    // n' x d
    int bs;        // m x d
    int attn;      // m x n'
    int teacher;   // m x d leaf
};

UttForward forward_pretrain_utterance(GraphContext& ctx, const Utterance& utt,
                                      const RunConfig& cfg, bool training, uint64_t seed) {
    Tape& t = ctx.tape;
    if (utt.teacher.rows != utt.tokens.length())
        throw std::runtime_error("teacher/token length mismatch for " + utt.id);
    if (utt.teacher.cols != cfg.encoder.d)
        throw std::runtime_error("teacher width mismatch for " + utt.id);
    int feat = t.leaf(utt.features);
    int speech = encode(ctx, feat, cfg.encoder, training, seed);
    int text = nc_embed(ctx, utt.tokens.ids, cfg.encoder.d);
    auto xm = cross_attend(ctx, text, speech, cfg.cross_modal_config());
    int teacher = t.leaf(utt.teacher);
    return {speech, xm.bs, xm.attn, teacher};
}

std::vector<size_t> batch_for_step(const std::vector<size_t>& train_idx, int batch_size, int step,
                                   uint64_t seed) {
    size_t n = train_idx.size();
    std::vector<size_t> batch(batch_size);
    // schedule is a pure function of (seed, step) so resumed runs line up
    static thread_local std::vector<std::pair<std::pair<uint64_t, uint64_t>, std::vector<size_t>>> cache;
    auto perm_for_epoch = [&](uint64_t epoch) -> const std::vector<size_t>& {
        for (auto& [key, perm] : cache)
            if (key == std::make_pair(seed, epoch)) return perm;
        std::vector<size_t> perm = train_idx;
        std::mt19937_64 rng(mix_seed(seed, 0xBA7C4, epoch));
        std::shuffle(perm.begin(), perm.end(), rng);
        if (cache.size() > 4) cache.erase(cache.begin());
        cache.emplace_back(std::make_pair(seed, epoch), std::move(perm));
        return cache.back().second;
    };
    for (int j = 0; j < batch_size; ++j) {
        uint64_t cursor = static_cast<uint64_t>(step) * batch_size + j;
        batch[j] = perm_for_epoch(cursor / n)[cursor % n];
    }
    return batch;
}

int classifier_logits(GraphContext& ctx, const Matrix& features, const RunConfig& cfg,
                      int cls_id, bool training, uint64_t seed) {
    Tape& t = ctx.tape;
    int feat = t.leaf(features);
    int speech = encode(ctx, feat, cfg.encoder, training, seed);
    auto xm = cls_only_forward(ctx, cls_id, speech, cfg.cross_modal_config());
    return t.linear(xm.bs, ctx.param("cls.w"), ctx.param("cls.b"));
}

void append_metrics(const std::string& path, const json& j) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot append metrics: " + path);
    os << j.dump() << "\n";
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path, const std::string& vocab_path,
                     bool need_teacher, const std::string& spans_path) {
    Dataset data;
    data.vocab = load_vocab(vocab_path);
    auto records = load_manifest(manifest_path);

    std::vector<std::pair<std::string, SpanList>> spans;
    if (!spans_path.empty()) spans = load_spans(spans_path);

    for (const auto& r : records) {
        Utterance u;
        u.id = r.utterance_id;
        if (r.feature_path.empty())
            throw std::runtime_error("dataset: record " + r.utterance_id +
                                     " has no feature_path (run featurize first)");
        u.features = load_features(r.feature_path);
        if (!r.transcript.empty()) u.tokens = tokenize(r.transcript, data.vocab);
        if (!r.teacher_path.empty()) {
            u.teacher = load_teacher(r.teacher_path, u.tokens.length()).matrix;
        } else if (need_teacher) {
            throw std::runtime_error("dataset: record " + r.utterance_id + " has no teacher_path");
        }
        u.label = r.intent_label;
        u.split = r.split;
        for (const auto& [id, sp] : spans)
            if (id == u.id) u.spans = sp;
        size_t idx = data.utterances.size();
        (u.split == "dev" ? data.dev_idx : data.train_idx).push_back(idx);
        data.utterances.push_back(std::move(u));
    }
    return data;
}

void init_model_params(ParameterStore& params, const RunConfig& cfg, int vocab_size) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x1117));
    init_encoder_params(params, cfg.encoder, rng);
    init_cross_modal_params(params, vocab_size, cfg.encoder.d, rng);
}

void init_classifier_params(ParameterStore& params, int d, int n_classes) {
    // zero init: uniform logits, initial CE = ln(n_classes)
    params.add("cls.w", Matrix(d, n_classes, 0.0));
    params.add("cls.b", Matrix(1, n_classes, 0.0));
}

double token_retrieval_accuracy(const Matrix& teacher, const Matrix& speech) {
    if (teacher.rows != speech.rows || teacher.rows < 2)
        throw std::invalid_argument("token_retrieval_accuracy: need b >= 2 matched rows");
    const auto& k = kernels::active();
    std::vector<double> tnorm(teacher.rows);
    for (int j = 0; j < teacher.rows; ++j) {
        tnorm[j] = std::sqrt(k.dot(teacher.row_ptr(j), teacher.row_ptr(j), teacher.cols));
        if (tnorm[j] < 1e-12) throw std::domain_error("token_retrieval_accuracy: degenerate row");
    }
    int correct = 0;
    for (int i = 0; i < speech.rows; ++i) {
        double snorm = std::sqrt(k.dot(speech.row_ptr(i), speech.row_ptr(i), speech.cols));
        if (snorm < 1e-12) throw std::domain_error("token_retrieval_accuracy: degenerate row");
        int best = 0;
        double best_cos = -2.0;
        for (int j = 0; j < teacher.rows; ++j) {
            double c = k.dot(speech.row_ptr(i), teacher.row_ptr(j), teacher.cols) / (snorm * tnorm[j]);
            if (c > best_cos) {
                best_cos = c;
                best = j;
            }
        }
        if (best == i) ++correct;
    }
    return static_cast<double>(correct) / speech.rows;
}

double diagonality_score(const Matrix& attn, const SpanList& spans, int window) {
    if (spans.empty()) throw std::invalid_argument("diagonality_score: no spans");
    int hits = 0;
    for (auto [row, expected] : spans) {
        if (row < 0 || row >= attn.rows || expected < 0 || expected >= attn.cols)
            throw std::out_of_range("diagonality_score: span outside attention matrix");
        int best = 0;
        for (int j = 1; j < attn.cols; ++j)
            if (attn.at(row, j) > attn.at(row, best)) best = j;
        if (std::abs(best - expected) <= window) ++hits;
    }
    return static_cast<double>(hits) / spans.size();
}

double pretrain_step(ParameterStore& params, AdamW& opt, const Dataset& data,
                     const std::vector<size_t>& batch, const RunConfig& cfg, int step) {
    GraphContext ctx(params);
    Tape& t = ctx.tape;
    std::vector<int> teacher_parts, speech_parts;
    bool sequence_mode = cfg.pretrain_loss_mode == "sequence";
    for (size_t j = 0; j < batch.size(); ++j) {
        const Utterance& utt = data.utterances[batch[j]];
        uint64_t seed = mix_seed(cfg.seed, static_cast<uint64_t>(step), j);
        auto f = forward_pretrain_utterance(ctx, utt, cfg, /*training=*/true, seed);
        if (sequence_mode) {
            speech_parts.push_back(t.mean_rows(f.speech));
            teacher_parts.push_back(t.slice_rows(f.teacher, 0, 1));
        } else {
            speech_parts.push_back(f.bs);
            teacher_parts.push_back(f.teacher);
        }
    }
    int teacher = t.concat_rows(teacher_parts);
    int speech = t.concat_rows(speech_parts);
    int loss = tokenwise_contrastive_loss(t, teacher, speech, cfg.pretrain_tau,
                                          cfg.pretrain_keep_tau_factor);
    double loss_value = t.val(loss).at(0, 0);
    if (!std::isfinite(loss_value)) throw std::runtime_error("pretraining diverged: non-finite loss");
    ctx.backward_and_accumulate(loss);
    opt.step(params);
    return loss_value;
}

EvalReport evaluate_alignment(ParameterStore& params, const Dataset& data,
                              const std::vector<size_t>& indices, const RunConfig& cfg) {
    EvalReport report;
    int retrieval_correct = 0, retrieval_total = 0;
    double diag_sum = 0.0;
    int diag_count = 0;
    Matrix pooled(static_cast<int>(indices.size()), cfg.encoder.d);
    Matrix teacher_cls(static_cast<int>(indices.size()), cfg.encoder.d);
    for (size_t i = 0; i < indices.size(); ++i) {
        const Utterance& utt = data.utterances[indices[i]];
        GraphContext ctx(params);
        auto f = forward_pretrain_utterance(ctx, utt, cfg, /*training=*/false, 0);
        const Matrix& bs = ctx.tape.val(f.bs);
        double acc = token_retrieval_accuracy(utt.teacher, bs);
        retrieval_correct += static_cast<int>(std::lround(acc * bs.rows));
        retrieval_total += bs.rows;
        if (!utt.spans.empty()) {
            diag_sum += diagonality_score(ctx.tape.val(f.attn), utt.spans);
            ++diag_count;
        }
        const Matrix& s = ctx.tape.val(f.speech);
        for (int jcol = 0; jcol < cfg.encoder.d; ++jcol) {
            double m = 0.0;
            for (int r = 0; r < s.rows; ++r) m += s.at(r, jcol);
            pooled.at(static_cast<int>(i), jcol) = m / s.rows;
            teacher_cls.at(static_cast<int>(i), jcol) = utt.teacher.at(0, jcol);
        }
    }
    report.retrieval_acc = retrieval_total ? static_cast<double>(retrieval_correct) / retrieval_total : 0.0;
    report.diag_score = diag_count ? diag_sum / diag_count : 0.0;
    if (indices.size() >= 2)
        report.utterance_retrieval_acc = token_retrieval_accuracy(teacher_cls, pooled);
    return report;
}

PretrainResult pretrain_run(const Dataset& data, const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from) {
    cfg.validate();
    if (data.train_idx.empty()) throw std::runtime_error("pretrain: empty training split");
    fs::create_directories(out_dir);
    std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();

    ParameterStore params;
    init_model_params(params, cfg, data.vocab.size());
    AdamW opt({cfg.pretrain_lr, 0.9, 0.999, 1e-8, cfg.pretrain_weight_decay});
    int start_step = 0;
    if (!resume_from.empty()) {
        load_checkpoint(resume_from, params, &opt);
        opt.config().lr = cfg.pretrain_lr;
        start_step = static_cast<int>(opt.step_count());
    }

    PretrainResult result;
    const std::vector<size_t>& eval_idx = data.dev_idx.empty() ? data.train_idx : data.dev_idx;
    for (int step = start_step; step < cfg.pretrain_max_steps; ++step) {
        auto batch = batch_for_step(data.train_idx, cfg.pretrain_batch_size, step, cfg.seed);
        double loss = pretrain_step(params, opt, data, batch, cfg, step);
        if (step == start_step) result.initial_loss = loss;
        result.final_loss = loss;
        if ((step + 1) % cfg.pretrain_eval_every == 0 || step + 1 == cfg.pretrain_max_steps) {
            json j{{"step", step + 1}, {"loss", loss}, {"lr", cfg.pretrain_lr}};
            if (step + 1 == cfg.pretrain_max_steps) {
                auto eval = evaluate_alignment(params, data, eval_idx, cfg);
                j["retrieval_acc"] = eval.retrieval_acc;
                j["diag_score"] = eval.diag_score;
                result.retrieval_acc = eval.retrieval_acc;
                result.diag_score = eval.diag_score;
            }
            append_metrics(metrics_path, j);
        }
    }
    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.tcac").string();
    save_checkpoint(result.checkpoint_path, params, &opt);
    save_run_config((fs::path(out_dir) / "run_config.txt").string(), cfg);
    return result;
}

double finetune_step(ParameterStore& params, AdamW& opt, const Dataset& data,
                     const std::vector<size_t>& batch, const RunConfig& cfg, uint64_t step_seed) {
    GraphContext ctx(params);
    Tape& t = ctx.tape;
    std::vector<int> logit_parts;
    std::vector<int> labels;
    for (size_t j = 0; j < batch.size(); ++j) {
        const Utterance& utt = data.utterances[batch[j]];
        if (utt.label < 0 || utt.label >= cfg.finetune_n_classes)
            throw std::runtime_error("finetune: label out of range for " + utt.id);
        uint64_t seed = mix_seed(step_seed, j);
        Matrix features = cfg.finetune_specaugment
                              ? spec_augment(utt.features, cfg.specaugment, mix_seed(seed, 0x5A))
                              : utt.features;
        logit_parts.push_back(
            classifier_logits(ctx, features, cfg, data.vocab.cls_id, /*training=*/true, seed));
        labels.push_back(utt.label);
    }
    int logits = t.concat_rows(logit_parts);
    int loss = t.cross_entropy(logits, labels);
    double loss_value = t.val(loss).at(0, 0);
    if (!std::isfinite(loss_value)) throw std::runtime_error("fine-tuning diverged: non-finite loss");
    ctx.backward_and_accumulate(loss);
    opt.step(params);
    return loss_value;
}

double evaluate_accuracy(ParameterStore& params, const Dataset& data,
                         const std::vector<size_t>& indices, const RunConfig& cfg) {
    if (indices.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    int correct = 0;
    for (size_t idx : indices) {
        const Utterance& utt = data.utterances[idx];
        GraphContext ctx(params);
        int logits = classifier_logits(ctx, utt.features, cfg, data.vocab.cls_id,
                                       /*training=*/false, 0);
        const Matrix& l = ctx.tape.val(logits);
        int best = 0;
        for (int j = 1; j < l.cols; ++j)
            if (l.at(0, j) > l.at(0, best)) best = j;  // ties keep the lowest index
        if (best == utt.label) ++correct;
    }
    return static_cast<double>(correct) / indices.size();
}

FinetuneResult finetune_run(const Dataset& data, const RunConfig& cfg, const std::string& out_dir,
                            const std::string& init_from) {
    cfg.validate();
    if (data.train_idx.empty()) throw std::runtime_error("finetune: empty training split");
    for (size_t idx : data.train_idx)
        if (data.utterances[idx].label < 0)
            throw std::runtime_error("finetune: missing intent label for " +
                                     data.utterances[idx].id);
    fs::create_directories(out_dir);
    std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();

    ParameterStore params;
    init_model_params(params, cfg, data.vocab.size());
    if (!init_from.empty()) load_checkpoint(init_from, params, nullptr);
    init_classifier_params(params, cfg.encoder.d, cfg.finetune_n_classes);
    AdamW opt({cfg.finetune_lr, 0.9, 0.999, 1e-8, cfg.finetune_weight_decay});

    const std::vector<size_t>& val_idx = data.dev_idx.empty() ? data.train_idx : data.dev_idx;
    FinetuneResult result;
    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.tcac").string();
    double best_val_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<size_t> order = data.train_idx;
    for (int epoch = 0; epoch < cfg.finetune_max_epochs; ++epoch) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 0xF1E7, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t off = 0; off < order.size(); off += cfg.finetune_batch_size) {
            std::vector<size_t> batch(
                order.begin() + off,
                order.begin() + std::min(off + cfg.finetune_batch_size, order.size()));
            double loss = finetune_step(params, opt, data, batch, cfg,
                                        mix_seed(cfg.seed, epoch, off));
            if (epoch == 0 && n_batches == 0) result.initial_train_loss = loss;
            epoch_loss += loss;
            ++n_batches;
        }
        // validation cross-entropy for early stopping
        double val_loss = 0.0;
        for (size_t idx : val_idx) {
            const Utterance& utt = data.utterances[idx];
            GraphContext ctx(params);
            int logits = classifier_logits(ctx, utt.features, cfg, data.vocab.cls_id, false, 0);
            int l = ctx.tape.cross_entropy(logits, {utt.label});
            val_loss += ctx.tape.val(l).at(0, 0);
        }
        val_loss /= static_cast<double>(val_idx.size());
        double val_acc = evaluate_accuracy(params, data, val_idx, cfg);
        result.val_acc_per_epoch.push_back(val_acc);
        append_metrics(metrics_path, json{{"epoch", epoch + 1},
                                          {"train_loss", epoch_loss / n_batches},
                                          {"val_loss", val_loss},
                                          {"val_acc", val_acc}});
        if (val_acc > result.best_val_acc || result.best_epoch < 0) {
            result.best_val_acc = val_acc;
            result.best_epoch = epoch + 1;
        }
        if (val_loss < best_val_loss - 1e-9) {
            best_val_loss = val_loss;
            since_best = 0;
            save_checkpoint(result.checkpoint_path, params, nullptr);
        } else if (++since_best >= cfg.finetune_patience) {
            break;
        }
    }
    if (!fs::exists(result.checkpoint_path)) save_checkpoint(result.checkpoint_path, params, nullptr);
    return result;
}

Matrix export_attention(ParameterStore& params, const Utterance& utt, const RunConfig& cfg) {
    if (utt.tokens.length() < 2) throw std::runtime_error("export_attention: utterance has no tokens");
    GraphContext ctx(params);
    Tape& t = ctx.tape;
    int feat = t.leaf(utt.features);
    int speech = encode(ctx, feat, cfg.encoder, /*training=*/false, 0);
    int text = nc_embed(ctx, utt.tokens.ids, cfg.encoder.d);
    auto xm = cross_attend(ctx, text, speech, cfg.cross_modal_config());
    return t.val(xm.attn);
}

}  // namespace tokalign
