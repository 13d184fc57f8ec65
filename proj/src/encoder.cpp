#include "tokalign/encoder.hpp"

#include <cmath>

namespace tokalign {

void EncoderConfig::validate() const {
    if (n_layers < 1 || n_pyramid < 0 || n_pyramid > n_layers)
        throw std::invalid_argument("encoder: bad layer counts");
    if (d % n_heads != 0)
        throw std::invalid_argument("encoder: d=" + std::to_string(d) +
                                    " not divisible by n_heads=" + std::to_string(n_heads));
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder: bad dropout rate");
}

int reduced_length(int n_frames, int n_pyramid) {
    int n = n_frames;
    for (int i = 0; i < n_pyramid; ++i) n /= 2;
    return n;
}

namespace {

// Input width of BiLSTM layer `layer` (0-based).
int layer_input_width(const EncoderConfig& cfg, int layer) {
    if (layer == 0) return cfg.n_mels;
    int w = 2 * cfg.hidden;
    if (layer - 1 < cfg.n_pyramid) w *= 2;  // previous layer ended in a pyramid reduction
    return w;
}

std::string lname(int layer, const char* suffix) {
    return "enc.l" + std::to_string(layer) + "." + suffix;
}

}  // namespace

void init_encoder_params(ParameterStore& params, const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    int h = cfg.hidden;
    for (int l = 0; l < cfg.n_layers; ++l) {
        int a = layer_input_width(cfg, l);
        for (const char* dir : {"fwd", "rev"}) {
            params.add(lname(l, dir) + ".wx", fanin_init(a, 4 * h, rng));
            params.add(lname(l, dir) + ".wh", fanin_init(h, 4 * h, rng));
            Matrix b(1, 4 * h, 0.0);
            for (int j = 0; j < h; ++j) b.at(0, h + j) = 1.0;  // forget gate bias
            params.add(lname(l, dir) + ".b", std::move(b));
        }
        if (a != 2 * h) params.add(lname(l, "res.w"), fanin_init(a, 2 * h, rng));
        params.add(lname(l, "ln.gain"), Matrix(1, 2 * h, 1.0));
        params.add(lname(l, "ln.bias"), Matrix(1, 2 * h, 0.0));
    }
    params.add("enc.proj.w", fanin_init(2 * h, cfg.d, rng));
    params.add("enc.proj.b", Matrix(1, cfg.d, 0.0));
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
        params.add(std::string("enc.attn.") + w, fanin_init(cfg.d, cfg.d, rng));
        params.add(std::string("enc.attn.") + w + ".b", Matrix(1, cfg.d, 0.0));
    }
    params.add("enc.attn.ln.gain", Matrix(1, cfg.d, 1.0));
    params.add("enc.attn.ln.bias", Matrix(1, cfg.d, 0.0));
}

int multi_head_self_attention(GraphContext& ctx, int x, int d, int n_heads,
                              const std::string& prefix) {
    Tape& t = ctx.tape;
    if (d % n_heads != 0) throw std::invalid_argument("self-attention: d not divisible by heads");
    int dh = d / n_heads;
    int q = t.linear(x, ctx.param(prefix + ".wq"), ctx.param(prefix + ".wq.b"));
    int k = t.linear(x, ctx.param(prefix + ".wk"), ctx.param(prefix + ".wk.b"));
    int v = t.linear(x, ctx.param(prefix + ".wv"), ctx.param(prefix + ".wv.b"));
    std::vector<int> heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hd = 0; hd < n_heads; ++hd) {
        int qs = t.slice_cols(q, hd * dh, (hd + 1) * dh);
        int ks = t.slice_cols(k, hd * dh, (hd + 1) * dh);
        int vs = t.slice_cols(v, hd * dh, (hd + 1) * dh);
        int logits = t.scale(t.matmul_nt(qs, ks), scale);
        heads.push_back(t.matmul(t.softmax_rows(logits), vs));
    }
    int cat = n_heads == 1 ? heads[0] : t.concat_cols(heads);
    return t.linear(cat, ctx.param(prefix + ".wo"), ctx.param(prefix + ".wo.b"));
}

int encode(GraphContext& ctx, int features_node, const EncoderConfig& cfg, bool training,
           uint64_t seed) {
    cfg.validate();
    Tape& t = ctx.tape;
    int n = t.val(features_node).rows;
    if (reduced_length(n, cfg.n_pyramid) < 1)
        throw std::invalid_argument("encode: input too short (" + std::to_string(n) + " frames)");
    if (t.val(features_node).cols != cfg.n_mels)
        throw std::invalid_argument("encode: feature width mismatch");

    int x = features_node;
    for (int l = 0; l < cfg.n_layers; ++l) {
        int fwd = t.lstm_dir(x, ctx.param(lname(l, "fwd.wx")), ctx.param(lname(l, "fwd.wh")),
                             ctx.param(lname(l, "fwd.b")), false);
        int rev = t.lstm_dir(x, ctx.param(lname(l, "rev.wx")), ctx.param(lname(l, "rev.wh")),
                             ctx.param(lname(l, "rev.b")), true);
        int out = t.concat_cols({fwd, rev});
        int res = layer_input_width(cfg, l) != 2 * cfg.hidden
                      ? t.matmul(x, ctx.param(lname(l, "res.w")))
                      : x;
        x = t.layer_norm_residual(res, out, ctx.param(lname(l, "ln.gain")),
                                  ctx.param(lname(l, "ln.bias")));
        x = t.dropout(x, cfg.dropout, training, seed * 1315423911ULL + l);
        if (l < cfg.n_pyramid) x = t.pyramid_reduce(x);
    }
    x = t.linear(x, ctx.param("enc.proj.w"), ctx.param("enc.proj.b"));
    int attn = multi_head_self_attention(ctx, x, cfg.d, cfg.n_heads, "enc.attn");
    x = t.layer_norm_residual(x, attn, ctx.param("enc.attn.ln.gain"),
                              ctx.param("enc.attn.ln.bias"));
    x = t.dropout(x, cfg.dropout, training, seed * 1315423911ULL + cfg.n_layers);
    return x;
}

}  // namespace tokalign
