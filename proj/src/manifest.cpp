#include "tokalign/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "json.hpp"

namespace tokalign {

using nlohmann::json;

std::vector<ManifestRecord> load_manifest(const std::string& path, bool check_files) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<ManifestRecord> records;
    std::unordered_set<std::string> seen;
    std::string line;
    int lineno = 0;
    auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
        return (base / p).string();
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        ManifestRecord r;
        r.utterance_id = j.at("utterance_id").get<std::string>();
        if (!seen.insert(r.utterance_id).second)
            throw std::runtime_error("manifest: duplicate utterance_id " + r.utterance_id);
        if (j.contains("audio_path")) r.audio_path = resolve(j["audio_path"].get<std::string>());
        if (j.contains("feature_path")) r.feature_path = resolve(j["feature_path"].get<std::string>());
        if (r.audio_path.empty() == r.feature_path.empty())
            throw std::runtime_error("manifest: " + r.utterance_id +
                                     " must have exactly one of audio_path/feature_path");
        if (j.contains("transcript")) r.transcript = j["transcript"].get<std::string>();
        if (j.contains("teacher_path")) r.teacher_path = resolve(j["teacher_path"].get<std::string>());
        if (j.contains("intent_label")) r.intent_label = j["intent_label"].get<int>();
        if (j.contains("split")) r.split = j["split"].get<std::string>();
        if (check_files) {
            for (const std::string* p : {&r.audio_path, &r.feature_path, &r.teacher_path}) {
                if (!p->empty() && !std::filesystem::exists(*p))
                    throw std::runtime_error("manifest: missing file " + *p + " (" + r.utterance_id + ")");
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

void save_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& r : records) {
        json j;
        j["utterance_id"] = r.utterance_id;
        if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
        if (!r.feature_path.empty()) j["feature_path"] = r.feature_path;
        if (!r.transcript.empty()) j["transcript"] = r.transcript;
        if (!r.teacher_path.empty()) j["teacher_path"] = r.teacher_path;
        if (r.intent_label >= 0) j["intent_label"] = r.intent_label;
        j["split"] = r.split;
        os << j.dump() << "\n";
    }
}

}  // namespace tokalign
