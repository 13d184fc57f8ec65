#pragma once

#include "tokalign/graph.hpp"

namespace tokalign {

// Symmetric tokenwise InfoNCE over batch-concatenated rows:
//   L = -(tau/(2b)) * sum_i [log softmax-row-i(s)_i + log softmax-col-i(s)_i]
// with s the temperature-scaled cosine similarity matrix. The leading tau
// factor is kept as printed; keep_tau_factor=false drops it.
int tokenwise_contrastive_loss(Tape& t, int teacher, int speech, double tau,
                               bool keep_tau_factor = true);

// The sequence-level ablation: same formula with one row per utterance
// (mean-pooled speech representation vs teacher [CLS] row).
int sequence_contrastive_loss(Tape& t, int pooled_speech, int teacher_cls, double tau,
                              bool keep_tau_factor = true);

// Diagnostic: the similarity matrix node alongside the loss.
struct ContrastiveOut {
    int loss;
    int sim;
};
ContrastiveOut contrastive_loss_with_sim(Tape& t, int teacher, int speech, double tau,
                                         bool keep_tau_factor = true);

}  // namespace tokalign
