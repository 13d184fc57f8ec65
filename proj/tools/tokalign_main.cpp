#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tokalign/audio.hpp"
#include "tokalign/check_suite.hpp"
#include "tokalign/config.hpp"
#include "tokalign/cross_modal.hpp"
#include "tokalign/manifest.hpp"
#include "tokalign/synth.hpp"
#include "tokalign/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tokalign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;  // validation / config error
constexpr int kExitData = 2;    // runtime / data error

bool verbose() {
    const char* v = std::getenv("TOKALIGN_LOG");
    return !v || std::string(v) != "quiet";
}

RunConfig make_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    apply_overrides(cfg, overrides);
    cfg.validate();
    return cfg;
}

int cmd_featurize(const std::string& manifest_path, const std::string& out_dir,
                  const std::string& stats_path, int n_mels) {
    auto records = load_manifest(manifest_path, /*check_files=*/false);
    fs::create_directories(fs::path(out_dir) / "features");
    FeatureConfig fcfg;
    fcfg.n_mels = n_mels;

    std::vector<Matrix> raw(records.size());
    std::vector<bool> done(records.size(), false);
    std::vector<std::string> errors;
    for (size_t i = 0; i < records.size(); ++i) {
        try {
            if (records[i].audio_path.empty())
                throw std::runtime_error("record has feature_path already; nothing to featurize");
            raw[i] = log_mel(read_wav(records[i].audio_path), fcfg);
            done[i] = true;
        } catch (const std::exception& e) {
            errors.push_back(records[i].utterance_id + ": " + e.what());
        }
    }

    std::string stats_file = stats_path.empty() ? (fs::path(out_dir) / "mvn.tcas").string()
                                                : stats_path;
    MvnStats stats;
    if (fs::exists(stats_file)) {
        stats = load_mvn_stats(stats_file);
        if (verbose()) std::cerr << "reusing stats " << stats_file << "\n";
    } else {
        std::vector<Matrix> ok_feats;
        for (size_t i = 0; i < records.size(); ++i)
            if (done[i]) ok_feats.push_back(raw[i]);
        if (ok_feats.empty()) {
            for (const auto& e : errors) std::cerr << "error: " << e << "\n";
            std::cerr << "featurize: no usable records\n";
            return kExitData;
        }
        stats = mvn_fit(ok_feats);
        save_mvn_stats(stats_file, stats);
    }

    std::vector<ManifestRecord> out_records;
    for (size_t i = 0; i < records.size(); ++i) {
        if (!done[i]) continue;
        std::string rel = "features/" + records[i].utterance_id + ".tcaf";
        save_features((fs::path(out_dir) / rel).string(), mvn_apply(raw[i], stats));
        ManifestRecord r = records[i];
        r.audio_path.clear();
        r.feature_path = rel;
        out_records.push_back(std::move(r));
    }
    save_manifest((fs::path(out_dir) / "manifest.jsonl").string(), out_records);
    if (verbose())
        std::cerr << "featurize: " << out_records.size() << "/" << records.size()
                  << " records written to " << out_dir << "\n";
    for (const auto& e : errors) std::cerr << "error: " << e << "\n";
    return errors.empty() ? kExitOk : kExitData;
}

int cmd_gradcheck() {
    auto results = run_check_suite();
    bool all_ok = true;
    for (const auto& r : results) {
        std::cout << (r.ok ? "PASS" : "FAIL") << " " << r.name
                  << " max_rel_err=" << r.report.max_rel_err
                  << " entries=" << r.report.n_checked << "\n";
        if (!r.ok) {
            all_ok = false;
            for (const auto& w : r.report.worst)
                std::cout << "   " << w.param << "[" << w.index << "] analytic=" << w.analytic
                          << " numeric=" << w.numeric << " rel_err=" << w.rel_err << "\n";
        }
    }
    return all_ok ? kExitOk : kExitData;
}

const Utterance& find_utterance(const Dataset& data, const std::string& id) {
    for (const auto& u : data.utterances)
        if (u.id == id) return u;
    throw std::runtime_error("utterance not found in manifest: " + id);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tokenwise speech/text alignment toolkit"};
    app.require_subcommand(1);

    std::string manifest, out_dir, vocab, config_path, stats_path, checkpoint, resume;
    std::string utterance_id, out_prefix, spans_path, task = "alignment", split = "dev";
    std::vector<std::string> overrides;
    int n_mels = 80;
    SynthConfig synth_cfg;

    auto add_common = [&](CLI::App* sub, bool needs_vocab) {
        sub->add_option("--manifest", manifest, "JSONL manifest")->required();
        if (needs_vocab) sub->add_option("--vocab", vocab, "vocabulary file (one token per line)");
        sub->add_option("--config", config_path, "run config file (key=value lines)");
        sub->add_option("--set", overrides, "config override key=value (repeatable)");
    };
    // vocab defaults to the file the synthesizer drops next to the manifest
    auto vocab_or_default = [&]() {
        if (!vocab.empty()) return vocab;
        std::string v = (fs::path(manifest).parent_path() / "vocab.txt").string();
        if (!fs::exists(v)) throw std::invalid_argument("--vocab required (no vocab.txt beside manifest)");
        return v;
    };
    auto spans_or_default = [&]() {
        if (!spans_path.empty()) return spans_path;
        std::string s = (fs::path(manifest).parent_path() / "spans.jsonl").string();
        return fs::exists(s) ? s : std::string();
    };

    auto* featurize = app.add_subcommand("featurize", "log-Mel features + MVN from WAV manifest");
    featurize->add_option("--manifest", manifest)->required();
    featurize->add_option("--out-dir", out_dir)->required();
    featurize->add_option("--stats", stats_path, "reuse existing TCAS stats (fit fresh otherwise)");
    featurize->add_option("--n-mels", n_mels);

    auto* synth = app.add_subcommand("synth", "generate the synthetic alignment corpus");
    synth->add_option("--out-dir", out_dir)->required();
    synth->add_option("--n-utterances", synth_cfg.n_utterances);
    synth->add_option("--seed", synth_cfg.seed);
    synth->add_option("--n-mels", synth_cfg.n_mels);
    synth->add_option("--d", synth_cfg.d);
    synth->add_option("--n-classes", synth_cfg.n_classes);
    synth->add_option("--noise-sigma", synth_cfg.noise_sigma);

    auto* pretrain = app.add_subcommand("pretrain", "contrastive pretraining");
    add_common(pretrain, true);
    pretrain->add_option("--out-dir", out_dir)->required();
    pretrain->add_option("--spans", spans_path, "spans file for diagonality evaluation");
    pretrain->add_option("--resume", resume, "checkpoint to continue from");

    auto* finetune = app.add_subcommand("finetune", "intent classifier fine-tuning");
    add_common(finetune, true);
    finetune->add_option("--out-dir", out_dir)->required();
    finetune->add_option("--init", checkpoint, "pretrained checkpoint (random init otherwise)");

    auto* evaluate = app.add_subcommand("evaluate", "alignment or intent metrics for a checkpoint");
    add_common(evaluate, true);
    evaluate->add_option("--checkpoint", checkpoint)->required();
    evaluate->add_option("--task", task)->check(CLI::IsMember({"alignment", "intent"}));
    evaluate->add_option("--split", split)->check(CLI::IsMember({"train", "dev", "all"}));
    evaluate->add_option("--spans", spans_path);

    auto* exporta = app.add_subcommand("export-attention", "attention heatmap for one utterance");
    add_common(exporta, true);
    exporta->add_option("--checkpoint", checkpoint)->required();
    exporta->add_option("--utterance", utterance_id)->required();
    exporta->add_option("--out", out_prefix, "output prefix (.csv and .pgm)")->required();
    exporta->add_option("--spans", spans_path);

    app.add_subcommand("gradcheck", "finite-difference checks over all model blocks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (app.got_subcommand("featurize")) return cmd_featurize(manifest, out_dir, stats_path, n_mels);

        if (app.got_subcommand("synth")) {
            generate_synth_dataset(out_dir, synth_cfg);
            if (verbose())
                std::cerr << "synth: " << synth_cfg.n_utterances << " utterances in " << out_dir << "\n";
            return kExitOk;
        }

        if (app.got_subcommand("gradcheck")) return cmd_gradcheck();

        RunConfig cfg = make_config(config_path, overrides);

        if (app.got_subcommand("pretrain")) {
            Dataset data = load_dataset(manifest, vocab_or_default(), true, spans_or_default());
            auto res = pretrain_run(data, cfg, out_dir, resume);
            json j{{"initial_loss", res.initial_loss}, {"final_loss", res.final_loss},
                   {"retrieval_acc", res.retrieval_acc}, {"diag_score", res.diag_score},
                   {"checkpoint", res.checkpoint_path}};
            std::cout << j.dump() << "\n";
            return kExitOk;
        }

        if (app.got_subcommand("finetune")) {
            Dataset data = load_dataset(manifest, vocab_or_default(), false, "");
            auto res = finetune_run(data, cfg, out_dir, checkpoint);
            json j{{"best_val_acc", res.best_val_acc}, {"best_epoch", res.best_epoch},
                   {"epochs_run", res.val_acc_per_epoch.size()}, {"checkpoint", res.checkpoint_path}};
            std::cout << j.dump() << "\n";
            return kExitOk;
        }

        if (app.got_subcommand("evaluate")) {
            bool alignment = task == "alignment";
            Dataset data = load_dataset(manifest, vocab_or_default(), alignment,
                                        alignment ? spans_or_default() : "");
            ParameterStore params;
            load_checkpoint(checkpoint, params, nullptr);
            std::vector<size_t> idx = split == "train" ? data.train_idx : data.dev_idx;
            if (split == "all" || idx.empty()) {
                idx.clear();
                for (size_t i = 0; i < data.utterances.size(); ++i) idx.push_back(i);
            }
            json j;
            if (alignment) {
                auto rep = evaluate_alignment(params, data, idx, cfg);
                j = {{"retrieval_acc", rep.retrieval_acc}, {"diag_score", rep.diag_score},
                     {"utterance_retrieval_acc", rep.utterance_retrieval_acc}};
            } else {
                j = {{"accuracy", evaluate_accuracy(params, data, idx, cfg)}};
            }
            std::cout << j.dump() << "\n";
            return kExitOk;
        }

        if (app.got_subcommand("export-attention")) {
            Dataset data = load_dataset(manifest, vocab_or_default(), false, spans_or_default());
            ParameterStore params;
            load_checkpoint(checkpoint, params, nullptr);
            const Utterance& utt = find_utterance(data, utterance_id);
            Matrix attn = export_attention(params, utt, cfg);
            write_attention_csv(out_prefix + ".csv", attn);
            write_attention_pgm(out_prefix + ".pgm", attn);
            if (!utt.spans.empty())
                std::cout << "diagonality_score=" << diagonality_score(attn, utt.spans) << "\n";
            if (verbose()) std::cerr << "wrote " << out_prefix << ".csv / .pgm\n";
            return kExitOk;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
