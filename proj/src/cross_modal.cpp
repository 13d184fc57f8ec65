#include "tokalign/cross_modal.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace tokalign {

Matrix positional_encodings(int length, int d) {
    Matrix pe(length, d);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d; i += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(i) / d);
            pe.at(pos, i) = std::sin(pos * freq);
            if (i + 1 < d) pe.at(pos, i + 1) = std::cos(pos * freq);
        }
    }
    return pe;
}

void init_cross_modal_params(ParameterStore& params, int vocab_size, int d, std::mt19937_64& rng) {
    params.add("xm.nc_table", normal_init(vocab_size, d, 0.02, rng));
    params.add("xm.wq", fanin_init(d, d, rng));
    params.add("xm.wk", fanin_init(d, d, rng));
    params.add("xm.wv", fanin_init(d, d, rng));
}

int nc_embed(GraphContext& ctx, const std::vector<int>& token_ids, int d) {
    Tape& t = ctx.tape;
    int table = ctx.param("xm.nc_table");
    int emb = t.rows_lookup(table, token_ids);
    int pe = t.leaf(positional_encodings(static_cast<int>(token_ids.size()), d));
    return t.add(emb, pe);
}

CrossAttention cross_attend(GraphContext& ctx, int text_node, int speech_node,
                            const CrossModalConfig& cfg) {
    Tape& t = ctx.tape;
    if (t.val(text_node).cols != cfg.d || t.val(speech_node).cols != cfg.d)
        throw std::invalid_argument("cross_attend: width mismatch");
    int q = t.matmul(text_node, ctx.param("xm.wq"));
    int k = t.matmul(speech_node, ctx.param("xm.wk"));
    int v = t.matmul(speech_node, ctx.param("xm.wv"));
    int logits = t.matmul_nt(q, k);
    if (cfg.scale_logits) logits = t.scale(logits, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    int attn = t.softmax_rows(logits);
    return {t.matmul(attn, v), attn};
}

CrossAttention cls_only_forward(GraphContext& ctx, int cls_token_id, int speech_node,
                                const CrossModalConfig& cfg) {
    int text = nc_embed(ctx, {cls_token_id}, cfg.d);
    return cross_attend(ctx, text, speech_node, cfg);
}

void write_attention_csv(const std::string& path, const Matrix& attn) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    char buf[32];
    for (int i = 0; i < attn.rows; ++i) {
        for (int j = 0; j < attn.cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.6f", attn.at(i, j));
            os << buf << (j + 1 < attn.cols ? "," : "");
        }
        os << "\n";
    }
}

void write_attention_pgm(const std::string& path, const Matrix& attn) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write: " + path);
    double mx = 0.0;
    for (double v : attn.v) mx = std::max(mx, v);
    if (mx <= 0.0) mx = 1.0;
    os << "P5\n" << attn.cols << " " << attn.rows << "\n255\n";
    for (double v : attn.v) {
        unsigned char px = static_cast<unsigned char>(std::lround(255.0 * v / mx));
        os.write(reinterpret_cast<const char*>(&px), 1);
    }
}

}  // namespace tokalign
