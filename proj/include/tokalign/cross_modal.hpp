#pragma once

#include <random>
#include <string>
#include <vector>

#include "tokalign/graph.hpp"
#include "tokalign/text.hpp"

namespace tokalign {

struct CrossModalConfig {
    int d = 64;
    bool scale_logits = false;  // paper-literal: no 1/sqrt(d) on cross-modal logits
};

// Fixed sinusoidal absolute positional encodings; position 0 = [CLS].
Matrix positional_encodings(int length, int d);

void init_cross_modal_params(ParameterStore& params, int vocab_size, int d, std::mt19937_64& rng);

// Table rows for the token ids plus positional encodings -> m x d node.
int nc_embed(GraphContext& ctx, const std::vector<int>& token_ids, int d);

struct CrossAttention {
    int bs;    // m x d contextual embeddings B_s
    int attn;  // m x n' row-stochastic attention matrix
};

// Q = T Wq, K = S Wk, V = S Wv, A = softmax(Q K^T), B_s = A V.
CrossAttention cross_attend(GraphContext& ctx, int text_node, int speech_node,
                            const CrossModalConfig& cfg);

// The [CLS]-only fine-tuning path: the position-0 NC embedding attends over
// the speech representation. Identical to row 0 of the full computation.
CrossAttention cls_only_forward(GraphContext& ctx, int cls_token_id, int speech_node,
                                const CrossModalConfig& cfg);

// Heatmap export for attention matrices.
void write_attention_csv(const std::string& path, const Matrix& attn);
void write_attention_pgm(const std::string& path, const Matrix& attn);

}  // namespace tokalign
