#include "tokalign/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "tokalign/io.hpp"

namespace tokalign {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    int n = static_cast<int>(a.size());
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * std::numbers::pi / len;
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (int k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// n_mels x (nfft/2+1) triangular filterbank, HTK mel scale, 0 Hz to Nyquist.
std::vector<std::vector<double>> mel_filterbank(int n_mels, int nfft, int sample_rate) {
    int n_bins = nfft / 2 + 1;
    double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> pts(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        pts[i] = mel_to_hz(mel_max * i / (n_mels + 1));
    std::vector<std::vector<double>> fb(n_mels, std::vector<double>(n_bins, 0.0));
    for (int m = 0; m < n_mels; ++m) {
        double lo = pts[m], mid = pts[m + 1], hi = pts[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            double f = static_cast<double>(k) * sample_rate / nfft;
            if (f > lo && f < mid)
                fb[m][k] = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                fb[m][k] = (hi - f) / (hi - mid);
        }
    }
    return fb;
}

}  // namespace

int frame_count(size_t n_samples, int sample_rate, const FeatureConfig& cfg) {
    int frame_len = static_cast<int>(std::lround(cfg.frame_length_ms * sample_rate / 1000.0));
    int hop = static_cast<int>(std::lround(cfg.frame_shift_ms * sample_rate / 1000.0));
    if (static_cast<int>(n_samples) < frame_len) return 0;
    return static_cast<int>((n_samples - frame_len) / hop) + 1;
}

std::vector<double> mel_filter_centers_hz(int n_mels, int sample_rate) {
    double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(n_mels);
    for (int m = 0; m < n_mels; ++m) centers[m] = mel_to_hz(mel_max * (m + 1) / (n_mels + 1));
    return centers;
}

Matrix log_mel(const AudioWave& wave, const FeatureConfig& cfg) {
    if (wave.sample_rate <= 0) throw std::invalid_argument("log_mel: bad sample rate");
    int frame_len = static_cast<int>(std::lround(cfg.frame_length_ms * wave.sample_rate / 1000.0));
    int hop = static_cast<int>(std::lround(cfg.frame_shift_ms * wave.sample_rate / 1000.0));
    int n_frames = frame_count(wave.samples.size(), wave.sample_rate, cfg);
    if (n_frames < 1) throw std::invalid_argument("log_mel: input shorter than one frame");

    int nfft = next_pow2(frame_len);
    auto fb = mel_filterbank(cfg.n_mels, nfft, wave.sample_rate);
    std::vector<double> hann(frame_len);
    for (int i = 0; i < frame_len; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (frame_len - 1));

    Matrix out(n_frames, cfg.n_mels);
    std::vector<std::complex<double>> buf(nfft);
    std::vector<double> power(nfft / 2 + 1);
    for (int t = 0; t < n_frames; ++t) {
        size_t base = static_cast<size_t>(t) * hop;
        for (int i = 0; i < nfft; ++i)
            buf[i] = i < frame_len ? wave.samples[base + i] * hann[i] : 0.0;
        fft(buf);
        for (int k = 0; k <= nfft / 2; ++k) power[k] = std::norm(buf[k]);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double e = 0.0;
            for (int k = 0; k <= nfft / 2; ++k) e += fb[m][k] * power[k];
            out.at(t, m) = std::log(std::max(e, cfg.log_floor));
        }
    }
    return out;
}

MvnStats mvn_fit(const std::vector<Matrix>& features) {
    if (features.empty()) throw std::invalid_argument("mvn_fit: empty collection");
    int d = features[0].cols;
    std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
    size_t n = 0;
    for (const auto& f : features) {
        if (f.cols != d) throw std::invalid_argument("mvn_fit: dimension mismatch");
        for (int i = 0; i < f.rows; ++i)
            for (int j = 0; j < d; ++j) {
                sum[j] += f.at(i, j);
                sumsq[j] += f.at(i, j) * f.at(i, j);
            }
        n += f.rows;
    }
    if (n == 0) throw std::invalid_argument("mvn_fit: no frames");
    MvnStats stats;
    stats.mean.resize(d);
    stats.stddev.resize(d);
    for (int j = 0; j < d; ++j) {
        stats.mean[j] = sum[j] / n;
        double var = sumsq[j] / n - stats.mean[j] * stats.mean[j];
        stats.stddev[j] = std::max(std::sqrt(std::max(var, 0.0)), kMvnEpsilon);
    }
    return stats;
}

Matrix mvn_apply(const Matrix& features, const MvnStats& stats) {
    if (features.cols != static_cast<int>(stats.mean.size()))
        throw std::invalid_argument("mvn_apply: dimension mismatch");
    Matrix out(features.rows, features.cols);
    for (int i = 0; i < features.rows; ++i)
        for (int j = 0; j < features.cols; ++j)
            out.at(i, j) = (features.at(i, j) - stats.mean[j]) / stats.stddev[j];
    return out;
}

Matrix spec_augment(const Matrix& features, const SpecAugmentPolicy& policy, uint64_t seed) {
    if (policy.freq_mask_width > features.cols)
        throw std::invalid_argument("spec_augment: freq mask width exceeds n_mels");
    if (policy.freq_mask_width < 0 || policy.time_mask_width < 0)
        throw std::invalid_argument("spec_augment: negative mask width");
    Matrix out = features;
    std::mt19937_64 rng(seed);
    for (int k = 0; k < policy.n_freq_masks; ++k) {
        std::uniform_int_distribution<int> width_dist(0, policy.freq_mask_width);
        int f = width_dist(rng);
        if (f == 0 || f > features.cols) continue;
        std::uniform_int_distribution<int> start_dist(0, features.cols - f);
        int f0 = start_dist(rng);
        for (int i = 0; i < out.rows; ++i)
            for (int j = f0; j < f0 + f; ++j) out.at(i, j) = policy.fill_value;
    }
    for (int k = 0; k < policy.n_time_masks; ++k) {
        std::uniform_int_distribution<int> width_dist(0, policy.time_mask_width);
        int w = std::min(width_dist(rng), features.rows);
        if (w == 0) continue;
        std::uniform_int_distribution<int> start_dist(0, features.rows - w);
        int t0 = start_dist(rng);
        for (int i = t0; i < t0 + w; ++i)
            for (int j = 0; j < out.cols; ++j) out.at(i, j) = policy.fill_value;
    }
    return out;
}

void save_features(const std::string& path, const Matrix& features) {
    auto os = io::open_out(path);
    io::write_magic(os, "TCAF");
    io::write_u32(os, static_cast<uint32_t>(features.rows));
    io::write_u32(os, static_cast<uint32_t>(features.cols));
    io::write_matrix_f32(os, features);
    if (!os) throw std::runtime_error("feature write failed: " + path);
}

Matrix load_features(const std::string& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "TCAF", "features");
    uint32_t rows = io::read_u32(is);
    uint32_t cols = io::read_u32(is);
    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    io::read_matrix_f32(is, m);
    return m;
}

void save_mvn_stats(const std::string& path, const MvnStats& stats) {
    auto os = io::open_out(path);
    io::write_magic(os, "TCAS");
    io::write_u32(os, static_cast<uint32_t>(stats.mean.size()));
    for (double x : stats.mean) io::write_f32(os, static_cast<float>(x));
    for (double x : stats.stddev) io::write_f32(os, static_cast<float>(x));
    if (!os) throw std::runtime_error("stats write failed: " + path);
}

MvnStats load_mvn_stats(const std::string& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "TCAS", "mvn stats");
    uint32_t d = io::read_u32(is);
    MvnStats stats;
    stats.mean.resize(d);
    stats.stddev.resize(d);
    for (auto& x : stats.mean) x = io::read_f32(is);
    for (auto& x : stats.stddev) x = io::read_f32(is);
    return stats;
}

}  // namespace tokalign
