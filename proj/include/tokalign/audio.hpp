#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokalign/matrix.hpp"

namespace tokalign {

struct AudioWave {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate = 0;
};

// PCM16 mono RIFF reader. Anything else is rejected.
AudioWave read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioWave& wave);  // test fixture helper

struct FeatureConfig {
    int n_mels = 80;
    double frame_length_ms = 25.0;
    double frame_shift_ms = 10.0;
    double log_floor = 1e-10;
};

// n_frames x n_mels log-Mel features. Hann window, power spectrum, HTK mel
// triangles from 0 Hz to Nyquist, natural log with floor.
Matrix log_mel(const AudioWave& wave, const FeatureConfig& cfg = {});

int frame_count(size_t n_samples, int sample_rate, const FeatureConfig& cfg = {});
// Center frequencies of the mel filters (oracle hook for tests).
std::vector<double> mel_filter_centers_hz(int n_mels, int sample_rate);

struct MvnStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // clamped to >= kMvnEpsilon
};

constexpr double kMvnEpsilon = 1e-5;

MvnStats mvn_fit(const std::vector<Matrix>& features);
Matrix mvn_apply(const Matrix& features, const MvnStats& stats);

struct SpecAugmentPolicy {
    int freq_mask_width = 15;  // F
    int time_mask_width = 70;  // T
    int n_freq_masks = 2;
    int n_time_masks = 2;
    double fill_value = 0.0;
};

// Frequency/time masking, mask width ~ Uniform{0..W}, start uniform over the
// valid range. Deterministic for a given seed; input left untouched.
Matrix spec_augment(const Matrix& features, const SpecAugmentPolicy& policy, uint64_t seed);

// Feature file "TCAF": u32 n_frames, u32 n_mels, row-major f32.
void save_features(const std::string& path, const Matrix& features);
Matrix load_features(const std::string& path);

// Stats file "TCAS": u32 n_mels, mean f32s, std f32s.
void save_mvn_stats(const std::string& path, const MvnStats& stats);
MvnStats load_mvn_stats(const std::string& path);

}  // namespace tokalign
