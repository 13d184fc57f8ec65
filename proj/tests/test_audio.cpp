#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "tokalign/audio.hpp"

using namespace tokalign;

TEST_CASE("frame count formula") {
    FeatureConfig cfg;
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<size_t> len(400, 100000);
    for (int i = 0; i < 200; ++i) {
        size_t n = len(rng);
        int expect = static_cast<int>((n - 400) / 160) + 1;
        CHECK(frame_count(n, 16000, cfg) == expect);
    }
    CHECK(frame_count(16000, 16000, cfg) == 98);
    CHECK(frame_count(400, 16000, cfg) == 1);
}

TEST_CASE("log_mel basics") {
    AudioWave w;
    w.sample_rate = 16000;
    w.samples.assign(16000, 0.0);
    FeatureConfig cfg;
    cfg.n_mels = 20;

    SUBCASE("zero wave hits the log floor") {
        Matrix f = log_mel(w, cfg);
        CHECK(f.rows == 98);
        CHECK(f.cols == 20);
        double floor_val = std::log(cfg.log_floor);
        for (double x : f.v) CHECK(x == doctest::Approx(floor_val));
    }

    SUBCASE("pure tone peaks at the filter nearest its frequency") {
        for (size_t i = 0; i < w.samples.size(); ++i)
            w.samples[i] = 0.8 * std::sin(2.0 * M_PI * 1000.0 * i / 16000.0);
        Matrix f = log_mel(w, cfg);
        auto centers = mel_filter_centers_hz(cfg.n_mels, 16000);
        int expect = 0;
        for (int j = 1; j < cfg.n_mels; ++j)
            if (std::abs(centers[j] - 1000.0) < std::abs(centers[expect] - 1000.0)) expect = j;
        for (int r = 0; r < f.rows; ++r) {
            int arg = 0;
            for (int j = 1; j < f.cols; ++j)
                if (f.at(r, j) > f.at(r, arg)) arg = j;
            CHECK(arg == expect);
        }
    }

    SUBCASE("too-short wave rejected") {
        w.samples.resize(300);
        CHECK_THROWS(log_mel(w, cfg));
    }
}

TEST_CASE("wav io") {
    std::string path = "test_tmp.wav";
    AudioWave w;
    w.sample_rate = 16000;
    w.samples = {0.5, -0.25, 0.0, 1.0 - 1.0 / 32768.0};
    write_wav(path, w);
    AudioWave r = read_wav(path);
    CHECK(r.sample_rate == 16000);
    REQUIRE(r.samples.size() == 4);
    CHECK(r.samples[0] == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(r.samples[1] == doctest::Approx(-0.25).epsilon(1e-4));

    SUBCASE("truncated data chunk") {
        std::ifstream is(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), {});
        std::ofstream os(path, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
        os.close();
        CHECK_THROWS(read_wav(path));
    }
    std::remove(path.c_str());
}

TEST_CASE("mvn") {
    SUBCASE("constant input clamps std") {
        Matrix m(3, 2, 5.0);
        MvnStats s = mvn_fit({m});
        CHECK(s.mean[0] == doctest::Approx(5.0));
        CHECK(s.stddev[0] == doctest::Approx(kMvnEpsilon));
    }
    SUBCASE("two-point population std") {
        Matrix m(2, 1);
        m.at(0, 0) = 0.0;
        m.at(1, 0) = 2.0;
        MvnStats s = mvn_fit({m});
        CHECK(s.mean[0] == doctest::Approx(1.0));
        CHECK(s.stddev[0] == doctest::Approx(1.0));
    }
    SUBCASE("pooling equals flattened oracle and normalization is exact") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> g(1.0, 3.0);
        std::vector<Matrix> mats;
        for (int n : {4, 9, 6}) {
            Matrix m(n, 3);
            for (double& x : m.v) x = g(rng);
            mats.push_back(std::move(m));
        }
        MvnStats s = mvn_fit(mats);
        for (int j = 0; j < 3; ++j) {
            double sum = 0.0, sq = 0.0;
            int count = 0;
            for (const auto& m : mats)
                for (int r = 0; r < m.rows; ++r) {
                    sum += m.at(r, j);
                    sq += m.at(r, j) * m.at(r, j);
                    ++count;
                }
            double mean = sum / count;
            CHECK(s.mean[j] == doctest::Approx(mean).epsilon(1e-12));
            CHECK(s.stddev[j] == doctest::Approx(std::sqrt(sq / count - mean * mean)).epsilon(1e-9));
        }
        // pooled stats of the normalized corpus
        std::vector<Matrix> normed;
        for (const auto& m : mats) normed.push_back(mvn_apply(m, s));
        MvnStats post = mvn_fit(normed);
        for (int j = 0; j < 3; ++j) {
            CHECK(std::abs(post.mean[j]) < 1e-5);
            CHECK(std::abs(post.stddev[j] - 1.0) < 1e-4);
        }
        // algebraic inverse
        Matrix back = normed[0];
        for (int r = 0; r < back.rows; ++r)
            for (int j = 0; j < 3; ++j)
                CHECK(back.at(r, j) * s.stddev[j] + s.mean[j] ==
                      doctest::Approx(mats[0].at(r, j)).epsilon(1e-9));
    }
    SUBCASE("empty collection") { CHECK_THROWS(mvn_fit({})); }
}

TEST_CASE("spec_augment") {
    std::mt19937_64 rng(77);
    Matrix f(120, 30);
    for (double& x : f.v) x = 1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    SpecAugmentPolicy p;
    p.freq_mask_width = 8;
    p.time_mask_width = 20;

    SUBCASE("zero-width policy is identity") {
        SpecAugmentPolicy z;
        z.freq_mask_width = 0;
        z.time_mask_width = 0;
        Matrix out = spec_augment(f, z, 1);
        CHECK(out.v == f.v);
    }
    SUBCASE("deterministic per seed, varies across seeds") {
        Matrix a = spec_augment(f, p, 42);
        Matrix b = spec_augment(f, p, 42);
        CHECK(a.v == b.v);
        bool any_diff = false;
        for (uint64_t s = 0; s < 10; ++s)
            if (spec_augment(f, p, s).v != a.v) any_diff = true;
        CHECK(any_diff);
    }
    SUBCASE("masked spans bounded, everything else untouched") {
        Matrix out = spec_augment(f, p, 9);
        CHECK(out.rows == f.rows);
        CHECK(out.cols == f.cols);
        int zero_rows = 0, zero_cols = 0;
        for (int r = 0; r < out.rows; ++r) {
            bool all0 = true;
            for (int c = 0; c < out.cols; ++c) all0 = all0 && out.at(r, c) == 0.0;
            zero_rows += all0;
        }
        for (int c = 0; c < out.cols; ++c) {
            bool all0 = true;
            for (int r = 0; r < out.rows; ++r) all0 = all0 && out.at(r, c) == 0.0;
            zero_cols += all0;
        }
        CHECK(zero_rows <= p.n_time_masks * p.time_mask_width);
        CHECK(zero_cols <= p.n_freq_masks * p.freq_mask_width);
        for (size_t i = 0; i < out.v.size(); ++i)
            CHECK((out.v[i] == f.v[i] || out.v[i] == 0.0));
    }
    SUBCASE("mask wider than mel axis rejected") {
        SpecAugmentPolicy bad;
        bad.freq_mask_width = 31;
        CHECK_THROWS(spec_augment(f, bad, 1));
    }
}

TEST_CASE("feature and stats files round-trip") {
    std::mt19937_64 rng(3);
    Matrix f(7, 5);
    for (double& x : f.v) x = std::normal_distribution<double>()(rng);
    save_features("test_tmp.tcaf", f);
    Matrix r = load_features("test_tmp.tcaf");
    CHECK(r.rows == 7);
    CHECK(r.cols == 5);
    for (size_t i = 0; i < f.v.size(); ++i)
        CHECK(r.v[i] == doctest::Approx(f.v[i]).epsilon(1e-6));
    // f32 payload: a second round-trip is bit-exact
    save_features("test_tmp2.tcaf", r);
    CHECK(load_features("test_tmp2.tcaf").v == r.v);
    std::remove("test_tmp.tcaf");
    std::remove("test_tmp2.tcaf");

    MvnStats s{{1.0, -2.5}, {0.5, 3.0}};
    save_mvn_stats("test_tmp.tcas", s);
    MvnStats rs = load_mvn_stats("test_tmp.tcas");
    CHECK(rs.mean[1] == doctest::Approx(-2.5));
    CHECK(rs.stddev[0] == doctest::Approx(0.5));
    std::remove("test_tmp.tcas");
}
