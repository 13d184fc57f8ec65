#pragma once

#include <cstdint>
#include <random>

#include "tokalign/graph.hpp"

namespace tokalign {

struct EncoderConfig {
    int n_mels = 80;      // input feature width
    int n_layers = 9;
    int n_pyramid = 3;
    int hidden = 32;      // per direction
    int d = 64;           // output width (teacher width)
    int n_heads = 4;      // must divide d; 12 at full scale (d=768)
    double dropout = 0.1;

    void validate() const;
};

// Length after the pyramid stages: floor(floor(floor(n/2)/2)/2) for 3 stages.
int reduced_length(int n_frames, int n_pyramid = 3);

void init_encoder_params(ParameterStore& params, const EncoderConfig& cfg, std::mt19937_64& rng);

// BiLSTM stack with residual+LN per layer, pyramid reduction after the first
// n_pyramid layers, linear projection to d, and a multi-head self-attention
// block with residual+LN. Returns the n' x d representation node.
int encode(GraphContext& ctx, int features_node, const EncoderConfig& cfg, bool training,
           uint64_t seed);

// Standard scaled dot-product self-attention (scale 1/sqrt(d/n_heads)) with
// output projection; exposed for unit tests. Parameter prefix selects weights.
int multi_head_self_attention(GraphContext& ctx, int x, int d, int n_heads,
                              const std::string& prefix);

}  // namespace tokalign
