#include "tokalign/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "tokalign/audio.hpp"
#include "tokalign/encoder.hpp"
#include "tokalign/kernels.hpp"
#include "tokalign/manifest.hpp"
#include "tokalign/text.hpp"

namespace tokalign {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string type_name(int k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "tok%02d", k);
    return buf;
}

// Orthonormal basis rows via Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> orthonormal_rows(int count, int d, std::mt19937_64& rng) {
    if (count > d) throw std::invalid_argument("synth: need n_types + 2 <= d");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    while (static_cast<int>(rows.size()) < count) {
        std::vector<double> v(d);
        for (double& x : v) x = gauss(rng);
        for (const auto& u : rows) {
            double proj = kernels::active().dot(v.data(), u.data(), d);
            kernels::active().axpy(v.data(), -proj, u.data(), d);
        }
        double norm = std::sqrt(kernels::active().dot(v.data(), v.data(), d));
        if (norm < 1e-6) continue;
        kernels::active().scale(v.data(), 1.0 / norm, d);
        rows.push_back(std::move(v));
    }
    return rows;
}

}  // namespace

void generate_synth_dataset(const std::string& out_dir, const SynthConfig& cfg) {
    if (cfg.n_types + 2 > cfg.d) throw std::invalid_argument("synth: need n_types + 2 <= d");
    fs::create_directories(fs::path(out_dir) / "features");
    fs::create_directories(fs::path(out_dir) / "teacher");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // fixed per-type spectral templates and durations
    std::vector<std::vector<double>> templates(cfg.n_types, std::vector<double>(cfg.n_mels));
    std::vector<int> durations(cfg.n_types);
    std::uniform_int_distribution<int> dur_dist(cfg.min_frames, cfg.max_frames);
    for (int k = 0; k < cfg.n_types; ++k) {
        for (double& x : templates[k]) x = 2.0 * uni(rng);
        durations[k] = dur_dist(rng);
    }
    // boundary templates: every utterance opens and closes with a fixed
    // silence-like edge so [CLS]/[SEP] rows have content-free frames to attend
    std::vector<double> edge_start(cfg.n_mels), edge_end(cfg.n_mels);
    for (double& x : edge_start) x = 0.5 * uni(rng);
    for (double& x : edge_end) x = 0.5 * uni(rng);
    const int edge_frames = 10;

    // teacher type vectors: orthonormal; order = content types, then CLS, SEP
    auto basis = orthonormal_rows(cfg.n_types + 2, cfg.d, rng);
    // fixed per-position perturbation directions
    int max_m = cfg.max_tokens + 2;
    std::vector<std::vector<double>> pos_dirs(max_m, std::vector<double>(cfg.d));
    for (auto& p : pos_dirs) {
        for (double& x : p) x = gauss(rng);
        double norm = std::sqrt(kernels::active().dot(p.data(), p.data(), cfg.d));
        kernels::active().scale(p.data(), 1.0 / norm, cfg.d);
    }

    auto teacher_row = [&](int basis_idx, int pos, Matrix& out, int row) {
        std::vector<double> v = basis[basis_idx];
        kernels::active().axpy(v.data(), cfg.pos_perturb, pos_dirs[pos].data(), cfg.d);
        double norm = std::sqrt(kernels::active().dot(v.data(), v.data(), cfg.d));
        for (int j = 0; j < cfg.d; ++j) out.at(row, j) = v[j] / norm;
    };

    // vocab: specials first
    std::vector<std::string> vocab_tokens = {kClsToken, kSepToken, kUnkToken};
    for (int k = 0; k < cfg.n_types; ++k) vocab_tokens.push_back(type_name(k));
    Vocab vocab = vocab_from_tokens(vocab_tokens);
    save_vocab((fs::path(out_dir) / "vocab.txt").string(), vocab);

    std::vector<ManifestRecord> records;
    std::ofstream spans_os((fs::path(out_dir) / "spans.jsonl").string());
    if (!spans_os) throw std::runtime_error("cannot write spans.jsonl");

    std::uniform_int_distribution<int> ntok_dist(cfg.min_tokens, cfg.max_tokens);
    int n_dev = static_cast<int>(std::lround(cfg.n_utterances * cfg.dev_fraction));
    for (int u = 0; u < cfg.n_utterances; ++u) {
        int n_tok = ntok_dist(rng);
        // distinct types per utterance so in-utterance retrieval is well posed
        std::vector<int> pool(cfg.n_types);
        for (int k = 0; k < cfg.n_types; ++k) pool[k] = k;
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<int> types(pool.begin(), pool.begin() + n_tok);

        int n_frames = 2 * edge_frames;
        for (int k : types) n_frames += durations[k];
        Matrix feat(n_frames, cfg.n_mels);
        std::string transcript;
        SpanList spans;
        int frame = 0;
        int n_red = reduced_length(n_frames);
        for (int f = 0; f < edge_frames; ++f, ++frame)
            for (int j = 0; j < cfg.n_mels; ++j)
                feat.at(frame, j) = edge_start[j] + cfg.noise_sigma * gauss(rng);
        for (size_t i = 0; i < types.size(); ++i) {
            int k = types[i];
            int f0 = frame;
            for (int f = 0; f < durations[k]; ++f, ++frame)
                for (int j = 0; j < cfg.n_mels; ++j)
                    feat.at(frame, j) = templates[k][j] + cfg.noise_sigma * gauss(rng);
            if (!transcript.empty()) transcript += " ";
            transcript += type_name(k);
            int center = (f0 + frame) / 2;
            spans.emplace_back(static_cast<int>(i) + 1, std::min(center / 8, n_red - 1));
        }
        for (int f = 0; f < edge_frames; ++f, ++frame)
            for (int j = 0; j < cfg.n_mels; ++j)
                feat.at(frame, j) = edge_end[j] + cfg.noise_sigma * gauss(rng);

        int m = n_tok + 2;
        Matrix teacher(m, cfg.d);
        teacher_row(cfg.n_types, 0, teacher, 0);  // [CLS]
        for (int i = 0; i < n_tok; ++i) teacher_row(types[i], i + 1, teacher, i + 1);
        teacher_row(cfg.n_types + 1, m - 1, teacher, m - 1);  // [SEP]

        char id[32];
        std::snprintf(id, sizeof(id), "utt%04d", u);
        std::string feat_rel = "features/" + std::string(id) + ".tcaf";
        std::string teach_rel = "teacher/" + std::string(id) + ".tcab";
        save_features((fs::path(out_dir) / feat_rel).string(), feat);
        save_teacher((fs::path(out_dir) / teach_rel).string(), teacher);

        ManifestRecord r;
        r.utterance_id = id;
        r.feature_path = feat_rel;
        r.transcript = transcript;
        r.teacher_path = teach_rel;
        r.intent_label = types[0] % cfg.n_classes;
        r.split = u >= cfg.n_utterances - n_dev ? "dev" : "train";
        records.push_back(std::move(r));

        json js;
        js["utterance_id"] = id;
        json arr = json::array();
        for (auto [row, key] : spans) arr.push_back({row, key});
        js["spans"] = arr;
        spans_os << js.dump() << "\n";
    }
    save_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
}

std::vector<std::pair<std::string, SpanList>> load_spans(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open spans: " + path);
    std::vector<std::pair<std::string, SpanList>> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        SpanList spans;
        for (const auto& pair : j.at("spans"))
            spans.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
        out.emplace_back(j.at("utterance_id").get<std::string>(), std::move(spans));
    }
    return out;
}

}  // namespace tokalign
