#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "tokalign/contrastive.hpp"
#include "tokalign/cross_modal.hpp"
#include "tokalign/encoder.hpp"
#include "tokalign/train.hpp"

using namespace tokalign;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config() {
    RunConfig cfg;
    cfg.encoder.n_mels = 6;
    cfg.encoder.n_layers = 3;
    cfg.encoder.n_pyramid = 2;
    cfg.encoder.hidden = 4;
    cfg.encoder.d = 16;
    cfg.encoder.n_heads = 2;
    cfg.encoder.dropout = 0.0;
    cfg.pretrain_batch_size = 2;
    cfg.pretrain_lr = 1e-3;
    cfg.specaugment.freq_mask_width = 2;
    cfg.specaugment.time_mask_width = 4;
    return cfg;
}

// little in-memory corpus: vocab + utterances with random features and
// near-orthogonal teacher rows
Dataset tiny_dataset(const RunConfig& cfg, int n_utts, uint64_t seed) {
    Dataset data;
    std::vector<std::string> toks = {"[CLS]", "[SEP]", "[UNK]"};
    for (int i = 0; i < 8; ++i) toks.push_back("w" + std::to_string(i));
    data.vocab = vocab_from_tokens(toks);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int u = 0; u < n_utts; ++u) {
        Utterance utt;
        utt.id = "u" + std::to_string(u);
        int n_tok = 2 + u % 3;
        std::string text;
        for (int i = 0; i < n_tok; ++i) text += (i ? " w" : "w") + std::to_string((u + i) % 8);
        utt.tokens = tokenize(text, data.vocab);
        int n_frames = 12 + 4 * (u % 3);
        utt.features = Matrix(n_frames, cfg.encoder.n_mels);
        for (double& x : utt.features.v) x = g(rng);
        utt.teacher = Matrix(utt.tokens.length(), cfg.encoder.d, 0.0);
        for (int i = 0; i < utt.tokens.length(); ++i) {
            for (int j = 0; j < cfg.encoder.d; ++j) utt.teacher.at(i, j) = 0.05 * g(rng);
            utt.teacher.at(i, (u * 5 + i) % cfg.encoder.d) += 1.0;
        }
        utt.label = u % 2;
        data.train_idx.push_back(data.utterances.size());
        data.utterances.push_back(std::move(utt));
    }
    return data;
}

}  // namespace

TEST_CASE("token_retrieval_accuracy units") {
    Matrix B(3, 3, 0.0);
    for (int i = 0; i < 3; ++i) B.at(i, i) = 1.0;
    CHECK(token_retrieval_accuracy(B, B) == doctest::Approx(1.0));
    Matrix deranged(3, 3, 0.0);
    deranged.at(0, 1) = deranged.at(1, 2) = deranged.at(2, 0) = 1.0;
    CHECK(token_retrieval_accuracy(B, deranged) == doctest::Approx(0.0));
    Matrix one(1, 3, 1.0);
    CHECK_THROWS(token_retrieval_accuracy(one, one));  // needs b >= 2
    Matrix zero(3, 3, 0.0);
    CHECK_THROWS(token_retrieval_accuracy(B, zero));
}

TEST_CASE("diagonality_score units") {
    Matrix a(4, 10, 0.0);
    for (int i = 0; i < 4; ++i) a.at(i, 2 * i) = 1.0;
    SpanList exact = {{0, 0}, {1, 2}, {2, 4}, {3, 6}};
    CHECK(diagonality_score(a, exact) == doctest::Approx(1.0));
    SpanList shifted = {{0, 1}, {1, 3}, {2, 5}, {3, 7}};  // off by one, window 2
    CHECK(diagonality_score(a, shifted) == doctest::Approx(1.0));
    SpanList far = {{0, 9}, {1, 9}};
    CHECK(diagonality_score(a, far) == doctest::Approx(0.0));
    CHECK_THROWS(diagonality_score(a, {{0, 99}}));
    CHECK_THROWS(diagonality_score(a, {}));
}

TEST_CASE("pretrain_step determinism and loss decrease") {
    RunConfig cfg = tiny_run_config();
    Dataset data = tiny_dataset(cfg, 4, 51);

    auto run_losses = [&](int steps) {
        ParameterStore params;
        init_model_params(params, cfg, data.vocab.size());
        AdamW opt({cfg.pretrain_lr, 0.9, 0.999, 1e-8, cfg.pretrain_weight_decay});
        std::vector<double> losses;
        for (int s = 0; s < steps; ++s)
            losses.push_back(pretrain_step(params, opt, data, {0, 1, 2, 3}, cfg, s));
        return losses;
    };
    auto a = run_losses(20);
    auto b = run_losses(20);
    CHECK(a == b);          // bit-identical trajectories
    CHECK(a[19] < a[0]);    // learning happens
}

TEST_CASE("self-teacher batch is a near fixed point") {
    RunConfig cfg = tiny_run_config();
    cfg.pretrain_weight_decay = 0.0;
    Dataset data = tiny_dataset(cfg, 2, 52);

    ParameterStore params;
    init_model_params(params, cfg, data.vocab.size());
    // substitute each utterance's teacher with the model's own output
    for (size_t idx : {size_t(0), size_t(1)}) {
        Utterance& utt = data.utterances[idx];
        GraphContext ctx(params);
        int speech = encode(ctx, ctx.tape.leaf(utt.features), cfg.encoder, false, 0);
        int text = nc_embed(ctx, utt.tokens.ids, cfg.encoder.d);
        auto xm = cross_attend(ctx, text, speech, cfg.cross_modal_config());
        utt.teacher = ctx.tape.val(xm.bs);
    }
    AdamW opt({cfg.pretrain_lr, 0.9, 0.999, 1e-8, 0.0});
    double loss = pretrain_step(params, opt, data, {0, 1}, cfg, 0);
    // every row retrieves itself, and the loss equals the direct evaluation of
    // the contrastive formula at the fixed point
    Matrix teacher_cat(0, cfg.encoder.d);
    std::vector<double> cat;
    int rows = 0;
    for (size_t idx : {size_t(0), size_t(1)}) {
        const Matrix& t = data.utterances[idx].teacher;
        cat.insert(cat.end(), t.v.begin(), t.v.end());
        rows += t.rows;
    }
    Matrix all(rows, cfg.encoder.d);
    all.v = cat;
    CHECK(token_retrieval_accuracy(all, all) == doctest::Approx(1.0));
    Tape t;
    int direct = tokenwise_contrastive_loss(t, t.leaf(all), t.leaf(all), cfg.pretrain_tau, true);
    CHECK(loss == doctest::Approx(t.val(direct).at(0, 0)).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip preserves forward outputs bit-exactly") {
    RunConfig cfg = tiny_run_config();
    Dataset data = tiny_dataset(cfg, 3, 53);
    ParameterStore params;
    init_model_params(params, cfg, data.vocab.size());
    AdamW opt({cfg.pretrain_lr, 0.9, 0.999, 1e-8, cfg.pretrain_weight_decay});
    for (int s = 0; s < 3; ++s) pretrain_step(params, opt, data, {0, 1, 2}, cfg, s);

    save_checkpoint("test_ckpt.tcac", params, &opt);
    ParameterStore loaded;
    init_model_params(loaded, cfg, data.vocab.size());
    AdamW opt2({cfg.pretrain_lr, 0.9, 0.999, 1e-8, cfg.pretrain_weight_decay});
    load_checkpoint("test_ckpt.tcac", loaded, &opt2);

    const Utterance& utt = data.utterances[0];
    GraphContext c1(params), c2(loaded);
    int o1 = encode(c1, c1.tape.leaf(utt.features), cfg.encoder, false, 0);
    int o2 = encode(c2, c2.tape.leaf(utt.features), cfg.encoder, false, 0);
    CHECK(c1.tape.val(o1).v == c2.tape.val(o2).v);

    // resumed optimizer continues bit-exactly
    double next1 = pretrain_step(params, opt, data, {0, 1, 2}, cfg, 3);
    double next2 = pretrain_step(loaded, opt2, data, {0, 1, 2}, cfg, 3);
    CHECK(next1 == next2);
    std::remove("test_ckpt.tcac");
}

TEST_CASE("finetune_step and accuracy") {
    RunConfig cfg = tiny_run_config();
    cfg.finetune_n_classes = 2;
    cfg.finetune_lr = 1e-3;
    Dataset data = tiny_dataset(cfg, 4, 54);

    ParameterStore params;
    init_model_params(params, cfg, data.vocab.size());
    init_classifier_params(params, cfg.encoder.d, cfg.finetune_n_classes);
    AdamW opt({cfg.finetune_lr, 0.9, 0.999, 1e-8, 0.0});

    // zero-init classifier: uniform softmax, first loss = ln(n_classes)
    double first = finetune_step(params, opt, data, {0, 1, 2, 3}, cfg, 1);
    CHECK(first == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    double loss = first;
    for (int s = 2; s < 60; ++s) loss = finetune_step(params, opt, data, {0, 1, 2, 3}, cfg, s);
    CHECK(loss < first);
    CHECK(evaluate_accuracy(params, data, data.train_idx, cfg) == doctest::Approx(1.0));

    SUBCASE("label out of range") {
        data.utterances[0].label = 9;
        CHECK_THROWS(finetune_step(params, opt, data, {0}, cfg, 1));
    }
}

TEST_CASE("synthetic corpus generator") {
    std::string dir1 = "test_synth_a", dir2 = "test_synth_b";
    SynthConfig scfg;
    scfg.n_utterances = 12;
    scfg.seed = 5;
    scfg.n_types = 10;
    scfg.n_mels = 6;
    scfg.d = 16;
    generate_synth_dataset(dir1, scfg);
    generate_synth_dataset(dir2, scfg);

    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)), {});
    };
    SUBCASE("byte-deterministic across runs") {
        CHECK(slurp(dir1 + "/manifest.jsonl") == slurp(dir2 + "/manifest.jsonl"));
        CHECK(slurp(dir1 + "/features/utt0003.tcaf") == slurp(dir2 + "/features/utt0003.tcaf"));
        CHECK(slurp(dir1 + "/teacher/utt0007.tcab") == slurp(dir2 + "/teacher/utt0007.tcab"));
        CHECK(slurp(dir1 + "/spans.jsonl") == slurp(dir2 + "/spans.jsonl"));
    }
    SUBCASE("loads as a dataset with aligned teachers and spans") {
        Dataset data = load_dataset(dir1 + "/manifest.jsonl", dir1 + "/vocab.txt", true,
                                    dir1 + "/spans.jsonl");
        CHECK(data.utterances.size() == 12);
        CHECK(!data.dev_idx.empty());
        for (const auto& u : data.utterances) {
            CHECK(u.teacher.rows == u.tokens.length());
            CHECK(!u.spans.empty());
            for (auto [row, key] : u.spans) {
                CHECK(row >= 1);
                CHECK(row < u.tokens.length() - 1);
                CHECK(key >= 0);
                CHECK(key < reduced_length(u.features.rows));
            }
        }
    }
    SUBCASE("teacher rows of distinct types are near-orthogonal") {
        Dataset data = load_dataset(dir1 + "/manifest.jsonl", dir1 + "/vocab.txt", true, "");
        for (const auto& u : data.utterances) {
            const Matrix& t = u.teacher;
            for (int i = 0; i < t.rows; ++i)
                for (int j = i + 1; j < t.rows; ++j) {
                    double dot = 0.0, ni = 0.0, nj = 0.0;
                    for (int c = 0; c < t.cols; ++c) {
                        dot += t.at(i, c) * t.at(j, c);
                        ni += t.at(i, c) * t.at(i, c);
                        nj += t.at(j, c) * t.at(j, c);
                    }
                    CHECK(std::abs(dot) / std::sqrt(ni * nj) < 0.3);
                }
        }
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("pretrain_run writes metrics and resumes bit-exactly") {
    RunConfig cfg = tiny_run_config();
    cfg.pretrain_max_steps = 6;
    cfg.pretrain_eval_every = 3;
    Dataset data = tiny_dataset(cfg, 5, 55);
    data.dev_idx.push_back(4);
    data.train_idx.pop_back();

    std::string full_dir = "test_run_full", part_dir = "test_run_part", cont_dir = "test_run_cont";
    auto full = pretrain_run(data, cfg, full_dir);

    RunConfig half = cfg;
    half.pretrain_max_steps = 3;
    auto part = pretrain_run(data, half, part_dir);
    auto cont = pretrain_run(data, cfg, cont_dir, part.checkpoint_path);
    CHECK(cont.final_loss == full.final_loss);
    CHECK(cont.retrieval_acc == full.retrieval_acc);

    std::ifstream metrics(full_dir + "/metrics.jsonl");
    int lines = 0;
    std::string line;
    while (std::getline(metrics, line)) ++lines;
    CHECK(lines == 2);  // steps 3 and 6

    fs::remove_all(full_dir);
    fs::remove_all(part_dir);
    fs::remove_all(cont_dir);
}

TEST_CASE("finetune_run trains from scratch on the tiny corpus") {
    RunConfig cfg = tiny_run_config();
    cfg.finetune_n_classes = 2;
    cfg.finetune_lr = 2e-3;
    cfg.finetune_batch_size = 4;
    cfg.finetune_max_epochs = 30;
    Dataset data = tiny_dataset(cfg, 6, 56);
    data.dev_idx = {4, 5};
    data.train_idx = {0, 1, 2, 3};

    std::string dir = "test_run_ft";
    auto res = finetune_run(data, cfg, dir, "");
    CHECK(res.initial_train_loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(!res.val_acc_per_epoch.empty());
    CHECK(res.best_epoch >= 1);
    CHECK(fs::exists(res.checkpoint_path));

    // the saved classifier checkpoint evaluates identically when reloaded
    ParameterStore loaded;
    load_checkpoint(res.checkpoint_path, loaded, nullptr);
    double acc = evaluate_accuracy(loaded, data, data.dev_idx, cfg);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    fs::remove_all(dir);
}

TEST_CASE("export_attention is row-stochastic") {
    RunConfig cfg = tiny_run_config();
    Dataset data = tiny_dataset(cfg, 2, 57);
    ParameterStore params;
    init_model_params(params, cfg, data.vocab.size());
    Matrix attn = export_attention(params, data.utterances[0], cfg);
    CHECK(attn.rows == data.utterances[0].tokens.length());
    CHECK(attn.cols == reduced_length(data.utterances[0].features.rows, cfg.encoder.n_pyramid));
    for (int i = 0; i < attn.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < attn.cols; ++j) sum += attn.at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}
