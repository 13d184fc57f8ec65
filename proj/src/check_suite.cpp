#include "tokalign/check_suite.hpp"

#include <random>

#include "tokalign/contrastive.hpp"
#include "tokalign/cross_modal.hpp"
#include "tokalign/encoder.hpp"
#include "tokalign/graph.hpp"

namespace tokalign {

namespace {

// Projects a matrix-valued node to a scalar through a fixed random readout so
// every output entry contributes to the checked gradient.
int readout(GraphContext& ctx, int node, const Matrix& r) {
    Tape& t = ctx.tape;
    return t.sum_all(t.mul(node, t.leaf(r)));
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Matrix m(rows, cols);
    for (double& x : m.v) x = gauss(rng);
    return m;
}

CheckResult run_case(const std::string& name, ParameterStore& params, const ScalarFn& f,
                     double rel_tol) {
    CheckResult r;
    r.name = name;
    r.report = grad_check(f, params);
    r.ok = r.report.ok(rel_tol);
    return r;
}

}  // namespace

std::vector<CheckResult> run_check_suite(double rel_tol, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> results;

    {
        ParameterStore p;
        p.add("x", random_matrix(5, 3, rng));
        p.add("w", fanin_init(3, 4, rng));
        p.add("b", random_matrix(1, 4, rng, 0.1));
        Matrix r = random_matrix(5, 4, rng);
        results.push_back(run_case("linear", p,
            [r](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int out = ctx.tape.linear(ctx.param("x"), ctx.param("w"), ctx.param("b"));
                int s = readout(ctx, out, r);
                if (acc) ctx.backward_and_accumulate(s);
                return ctx.tape.val(s).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        int a = 3, h = 2, n = 6;
        p.add("x", random_matrix(n, a, rng));
        for (const char* dir : {"fwd", "rev"}) {
            std::string d(dir);
            p.add(d + ".wx", fanin_init(a, 4 * h, rng));
            p.add(d + ".wh", fanin_init(h, 4 * h, rng));
            p.add(d + ".b", random_matrix(1, 4 * h, rng, 0.1));
        }
        Matrix r = random_matrix(n, 2 * h, rng);
        results.push_back(run_case("bilstm_layer", p,
            [r](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                Tape& t = ctx.tape;
                int x = ctx.param("x");
                int fwd = t.lstm_dir(x, ctx.param("fwd.wx"), ctx.param("fwd.wh"),
                                     ctx.param("fwd.b"), false);
                int rev = t.lstm_dir(x, ctx.param("rev.wx"), ctx.param("rev.wh"),
                                     ctx.param("rev.b"), true);
                int s = readout(ctx, t.concat_cols({fwd, rev}), r);
                if (acc) ctx.backward_and_accumulate(s);
                return t.val(s).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        p.add("x", random_matrix(4, 5, rng));
        p.add("sub", random_matrix(4, 5, rng));
        p.add("gain", random_matrix(1, 5, rng, 0.5));
        p.add("bias", random_matrix(1, 5, rng, 0.5));
        Matrix r = random_matrix(4, 5, rng);
        results.push_back(run_case("layer_norm_residual", p,
            [r](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int out = ctx.tape.layer_norm_residual(ctx.param("x"), ctx.param("sub"),
                                                       ctx.param("gain"), ctx.param("bias"));
                int s = readout(ctx, out, r);
                if (acc) ctx.backward_and_accumulate(s);
                return ctx.tape.val(s).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        int d = 8, n = 5;
        p.add("x", random_matrix(n, d, rng));
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            p.add(std::string("attn.") + w, fanin_init(d, d, rng));
            p.add(std::string("attn.") + w + ".b", random_matrix(1, d, rng, 0.1));
        }
        Matrix r = random_matrix(n, d, rng);
        results.push_back(run_case("self_attention", p,
            [r, d](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int out = multi_head_self_attention(ctx, ctx.param("x"), d, 2, "attn");
                int s = readout(ctx, out, r);
                if (acc) ctx.backward_and_accumulate(s);
                return ctx.tape.val(s).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        int d = 8, n_speech = 6;
        std::mt19937_64 init_rng(seed + 1);
        init_cross_modal_params(p, 6, d, init_rng);
        p.add("speech", random_matrix(n_speech, d, rng));
        std::vector<int> ids = {0, 3, 4, 1};
        Matrix r = random_matrix(static_cast<int>(ids.size()), d, rng);
        results.push_back(run_case("cross_modal_attention", p,
            [r, ids, d](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int text = nc_embed(ctx, ids, d);
                auto xm = cross_attend(ctx, text, ctx.param("speech"), {d, false});
                int s = readout(ctx, xm.bs, r);
                if (acc) ctx.backward_and_accumulate(s);
                return ctx.tape.val(s).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        int b = 5, d = 8;
        p.add("teacher", random_matrix(b, d, rng));
        p.add("speech", random_matrix(b, d, rng));
        results.push_back(run_case("tokenwise_contrastive", p,
            [](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int loss = tokenwise_contrastive_loss(ctx.tape, ctx.param("teacher"),
                                                      ctx.param("speech"), 0.07, true);
                if (acc) ctx.backward_and_accumulate(loss);
                return ctx.tape.val(loss).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        int b = 4, d = 8;
        p.add("pooled", random_matrix(b, d, rng));
        p.add("teacher_cls", random_matrix(b, d, rng));
        results.push_back(run_case("sequence_contrastive", p,
            [](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int loss = sequence_contrastive_loss(ctx.tape, ctx.param("pooled"),
                                                     ctx.param("teacher_cls"), 0.07, true);
                if (acc) ctx.backward_and_accumulate(loss);
                return ctx.tape.val(loss).at(0, 0);
            }, rel_tol));
    }

    {
        ParameterStore p;
        int d = 8, n_classes = 4;
        p.add("x", random_matrix(3, d, rng));
        p.add("cls.w", fanin_init(d, n_classes, rng));
        p.add("cls.b", random_matrix(1, n_classes, rng, 0.1));
        std::vector<int> labels = {1, 0, 3};
        results.push_back(run_case("classifier_head", p,
            [labels](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                int logits = ctx.tape.linear(ctx.param("x"), ctx.param("cls.w"),
                                             ctx.param("cls.b"));
                int loss = ctx.tape.cross_entropy(logits, labels);
                if (acc) ctx.backward_and_accumulate(loss);
                return ctx.tape.val(loss).at(0, 0);
            }, rel_tol));
    }

    {
        // tiny end-to-end pretraining loss: features -> encoder -> cross-modal
        // attention vs a fixed teacher
        EncoderConfig enc;
        enc.n_mels = 5;
        enc.n_layers = 2;
        enc.n_pyramid = 1;
        enc.hidden = 3;
        enc.d = 8;
        enc.n_heads = 2;
        enc.dropout = 0.0;
        ParameterStore p;
        std::mt19937_64 init_rng(seed + 2);
        init_encoder_params(p, enc, init_rng);
        init_cross_modal_params(p, 6, enc.d, init_rng);
        Matrix features = random_matrix(10, enc.n_mels, rng);
        std::vector<int> ids = {0, 2, 5, 1};
        Matrix teacher = random_matrix(static_cast<int>(ids.size()), enc.d, rng);
        results.push_back(run_case("end_to_end_pretrain_loss", p,
            [features, ids, teacher, enc](ParameterStore& ps, bool acc) {
                GraphContext ctx(ps);
                Tape& t = ctx.tape;
                int speech = encode(ctx, t.leaf(features), enc, false, 0);
                int text = nc_embed(ctx, ids, enc.d);
                auto xm = cross_attend(ctx, text, speech, {enc.d, false});
                int loss = tokenwise_contrastive_loss(t, t.leaf(teacher), xm.bs, 0.07, true);
                if (acc) ctx.backward_and_accumulate(loss);
                return t.val(loss).at(0, 0);
            }, rel_tol));
    }

    return results;
}

}  // namespace tokalign
