#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "tokalign/cross_modal.hpp"

using namespace tokalign;

namespace {

ParameterStore random_xm(int vocab, int d, uint64_t seed) {
    ParameterStore p;
    std::mt19937_64 rng(seed);
    init_cross_modal_params(p, vocab, d, rng);
    return p;
}

Matrix random_speech(int n, int d, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix s(n, d);
    for (double& x : s.v) x = g(rng);
    return s;
}

}  // namespace

TEST_CASE("positional encodings closed form") {
    int d = 6;
    Matrix pe = positional_encodings(4, d);
    // position 0: sin(0)=0 on even dims, cos(0)=1 on odd dims
    for (int i = 0; i < d; i += 2) {
        CHECK(pe.at(0, i) == doctest::Approx(0.0));
        CHECK(pe.at(0, i + 1) == doctest::Approx(1.0));
    }
    for (int pos = 0; pos < 4; ++pos)
        for (int i = 0; i < d; i += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(i) / d);
            CHECK(pe.at(pos, i) == doctest::Approx(std::sin(pos * freq)).epsilon(1e-6));
            CHECK(pe.at(pos, i + 1) == doctest::Approx(std::cos(pos * freq)).epsilon(1e-6));
        }
}

TEST_CASE("nc_embed") {
    int d = 8;
    ParameterStore p = random_xm(10, d, 1);
    SUBCASE("zero table leaves pure positional encodings") {
        p.value("xm.nc_table") = Matrix(10, d, 0.0);
        GraphContext ctx(p);
        int t = nc_embed(ctx, {0, 3, 3, 1}, d);
        Matrix pe = positional_encodings(4, d);
        for (size_t i = 0; i < pe.v.size(); ++i)
            CHECK(ctx.tape.val(t).v[i] == doctest::Approx(pe.v[i]).epsilon(1e-9));
    }
    SUBCASE("same token at different positions differs") {
        GraphContext ctx(p);
        const Matrix& t = ctx.tape.val(nc_embed(ctx, {0, 3, 2, 3, 1}, d));
        bool differ = false;
        for (int j = 0; j < d; ++j) differ = differ || t.at(1, j) != t.at(3, j);
        CHECK(differ);
    }
    SUBCASE("out-of-range id") {
        GraphContext ctx(p);
        CHECK_THROWS(nc_embed(ctx, {0, 99}, d));
    }
}

TEST_CASE("cross_attend contracts") {
    int d = 8;
    ParameterStore p = random_xm(12, d, 2);
    std::vector<int> ids = {0, 4, 7, 1};

    SUBCASE("rows are a distribution") {
        GraphContext ctx(p);
        int text = nc_embed(ctx, ids, d);
        auto out = cross_attend(ctx, text, ctx.tape.leaf(random_speech(5, d, 3)), {d, false});
        const Matrix& a = ctx.tape.val(out.attn);
        CHECK(a.rows == 4);
        CHECK(a.cols == 5);
        for (int i = 0; i < a.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < a.cols; ++j) {
                CHECK(a.at(i, j) >= 0.0);
                sum += a.at(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }

    SUBCASE("n'=1 collapses to the single value row") {
        GraphContext ctx(p);
        Matrix speech = random_speech(1, d, 4);
        int text = nc_embed(ctx, ids, d);
        auto out = cross_attend(ctx, text, ctx.tape.leaf(speech), {d, false});
        const Matrix& a = ctx.tape.val(out.attn);
        for (double x : a.v) CHECK(x == 1.0);
        // B_s rows all equal V's single row
        GraphContext c2(p);
        int v = c2.tape.matmul(c2.tape.leaf(speech), c2.param("xm.wv"));
        const Matrix& vrow = c2.tape.val(v);
        const Matrix& bs = ctx.tape.val(out.bs);
        for (int i = 0; i < bs.rows; ++i)
            for (int j = 0; j < d; ++j)
                CHECK(bs.at(i, j) == doctest::Approx(vrow.at(0, j)).epsilon(1e-12));
    }

    SUBCASE("zero W_q gives uniform attention over value rows") {
        p.value("xm.wq") = Matrix(d, d, 0.0);
        GraphContext ctx(p);
        Matrix speech = random_speech(5, d, 5);
        int text = nc_embed(ctx, ids, d);
        auto out = cross_attend(ctx, text, ctx.tape.leaf(speech), {d, false});
        const Matrix& a = ctx.tape.val(out.attn);
        for (double x : a.v) CHECK(x == doctest::Approx(0.2).epsilon(1e-12));
    }

    SUBCASE("hand oracle, m=2 n'=3") {
        // independent scalar recomputation of Q=TWq, K=SWk, V=SWv, softmax, AV
        GraphContext ctx(p);
        Matrix text_val(2, d), speech = random_speech(3, d, 6);
        std::mt19937_64 rng(7);
        for (double& x : text_val.v) x = std::normal_distribution<double>()(rng);
        auto out = cross_attend(ctx, ctx.tape.leaf(text_val), ctx.tape.leaf(speech), {d, false});

        const Matrix& wq = p.value("xm.wq");
        const Matrix& wk = p.value("xm.wk");
        const Matrix& wv = p.value("xm.wv");
        auto matmul = [d](const Matrix& a, const Matrix& b) {
            Matrix c(a.rows, d, 0.0);
            for (int i = 0; i < a.rows; ++i)
                for (int kk = 0; kk < d; ++kk)
                    for (int j = 0; j < d; ++j) c.at(i, j) += a.at(i, kk) * b.at(kk, j);
            return c;
        };
        Matrix q = matmul(text_val, wq), k = matmul(speech, wk), v = matmul(speech, wv);
        for (int i = 0; i < 2; ++i) {
            double logits[3], mx = -1e300;
            for (int j = 0; j < 3; ++j) {
                logits[j] = 0.0;
                for (int c = 0; c < d; ++c) logits[j] += q.at(i, c) * k.at(j, c);
                mx = std::max(mx, logits[j]);
            }
            double z = 0.0;
            for (double l : logits) z += std::exp(l - mx);
            for (int j = 0; j < 3; ++j) {
                double aij = std::exp(logits[j] - mx) / z;
                CHECK(ctx.tape.val(out.attn).at(i, j) == doctest::Approx(aij).epsilon(1e-6));
            }
            for (int c = 0; c < d; ++c) {
                double b = 0.0;
                for (int j = 0; j < 3; ++j)
                    b += std::exp(logits[j] - mx) / z * v.at(j, c);
                CHECK(ctx.tape.val(out.bs).at(i, c) == doctest::Approx(b).epsilon(1e-6));
            }
        }
    }

    SUBCASE("[CLS]-only path equals row 0 of the full path") {
        Matrix speech = random_speech(6, d, 8);
        GraphContext full(p);
        int text = nc_embed(full, ids, d);
        auto out = cross_attend(full, text, full.tape.leaf(speech), {d, false});
        GraphContext cls(p);
        auto cls_out = cls_only_forward(cls, ids[0], cls.tape.leaf(speech), {d, false});
        const Matrix& bs = full.tape.val(out.bs);
        const Matrix& cbs = cls.tape.val(cls_out.bs);
        REQUIRE(cbs.rows == 1);
        for (int j = 0; j < d; ++j)
            CHECK(cbs.at(0, j) == doctest::Approx(bs.at(0, j)).epsilon(1e-7));
    }

    SUBCASE("norm bound: B_s rows inside the value hull") {
        GraphContext ctx(p);
        Matrix speech = random_speech(5, d, 9);
        int text = nc_embed(ctx, ids, d);
        auto out = cross_attend(ctx, text, ctx.tape.leaf(speech), {d, false});
        int v = ctx.tape.matmul(ctx.tape.leaf(speech), ctx.param("xm.wv"));
        const Matrix& vm = ctx.tape.val(v);
        double vmax = 0.0;
        for (int j = 0; j < vm.rows; ++j) {
            double n2 = 0.0;
            for (int c = 0; c < d; ++c) n2 += vm.at(j, c) * vm.at(j, c);
            vmax = std::max(vmax, std::sqrt(n2));
        }
        const Matrix& bs = ctx.tape.val(out.bs);
        for (int i = 0; i < bs.rows; ++i) {
            double n2 = 0.0;
            for (int c = 0; c < d; ++c) n2 += bs.at(i, c) * bs.at(i, c);
            CHECK(std::sqrt(n2) <= vmax + 1e-6);
        }
    }

    SUBCASE("width mismatch") {
        GraphContext ctx(p);
        int text = nc_embed(ctx, ids, d);
        CHECK_THROWS(cross_attend(ctx, text, ctx.tape.leaf(random_speech(3, d + 2, 10)), {d, false}));
    }
}

TEST_CASE("attention export formats") {
    Matrix a(2, 3);
    a.v = {0.5, 0.25, 0.25, 0.1, 0.1, 0.8};
    write_attention_csv("test_attn.csv", a);
    std::ifstream is("test_attn.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "0.500000,0.250000,0.250000");
    std::remove("test_attn.csv");

    write_attention_pgm("test_attn.pgm", a);
    std::ifstream pg("test_attn.pgm", std::ios::binary);
    std::string header;
    std::getline(pg, header);
    CHECK(header == "P5");
    std::remove("test_attn.pgm");
}
