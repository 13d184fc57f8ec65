#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokalign/matrix.hpp"

namespace tokalign {

// Named trainable tensors with matching gradient slots. Insertion order is
// preserved so optimizer sweeps and checkpoints are deterministic.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Matrix value;
        Matrix grad;
    };

    Matrix& add(const std::string& name, Matrix init);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Matrix& value(const std::string& name);
    const Matrix& value(const std::string& name) const;
    Matrix& grad(const std::string& name);

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t n_scalars() const;

    void zero_grad();

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Initializers.
Matrix uniform_init(int rows, int cols, double k, std::mt19937_64& rng);   // U(-k, k)
Matrix normal_init(int rows, int cols, double stddev, std::mt19937_64& rng);
Matrix fanin_init(int fan_in, int fan_out, std::mt19937_64& rng);          // U(+-1/sqrt(fan_in))

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay Adam with bias correction. Gradients are zeroed
// after each step. Throws on non-finite gradients.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(ParameterStore& params);
    int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }
    AdamWConfig& config() { return cfg_; }

    // Moment access for checkpointing.
    struct Moments {
        Matrix m;
        Matrix v;
    };
    std::unordered_map<std::string, Moments>& moments() { return moments_; }
    void set_step_count(int64_t s) { step_ = s; }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

// Checkpoint file: magic "TCAC", u32 version, tensors as f64 payloads, and
// optional optimizer state.
void save_checkpoint(const std::string& path, const ParameterStore& params, const AdamW* opt);
void load_checkpoint(const std::string& path, ParameterStore& params, AdamW* opt);

}  // namespace tokalign
