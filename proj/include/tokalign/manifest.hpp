#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tokalign {

struct ManifestRecord {
    std::string utterance_id;
    std::string audio_path;    // exactly one of audio_path/feature_path is set
    std::string feature_path;
    std::string transcript;
    std::string teacher_path;  // pretraining
    int intent_label = -1;     // fine-tuning; -1 = absent
    std::string split = "train";
};

// JSON-lines manifest, one record per line. Throws on duplicate ids, on
// records carrying both or neither of audio_path/feature_path, and (when
// check_files is set) on referenced files that do not exist.
std::vector<ManifestRecord> load_manifest(const std::string& path, bool check_files = true);
void save_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

}  // namespace tokalign
