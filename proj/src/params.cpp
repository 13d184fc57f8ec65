#include "tokalign/params.hpp"

#include <cmath>

#include "tokalign/io.hpp"

namespace tokalign {

Matrix& ParameterStore::add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("parameter already exists: " + name);
    index_[name] = entries_.size();
    Entry e;
    e.name = name;
    e.grad = Matrix(init.rows, init.cols, 0.0);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return entries_.back().value;
}

Matrix& ParameterStore::value(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return entries_[it->second].value;
}

const Matrix& ParameterStore::value(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return entries_[it->second].value;
}

Matrix& ParameterStore::grad(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return entries_[it->second].grad;
}

size_t ParameterStore::n_scalars() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
}

Matrix uniform_init(int rows, int cols, double k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-k, k);
    Matrix m(rows, cols);
    for (double& x : m.v) x = dist(rng);
    return m;
}

Matrix normal_init(int rows, int cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& x : m.v) x = dist(rng);
    return m;
}

Matrix fanin_init(int fan_in, int fan_out, std::mt19937_64& rng) {
    return uniform_init(fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

void AdamW::step(ParameterStore& params) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& e : params.entries()) {
        auto& mom = moments_[e.name];
        if (mom.m.size() != e.value.size()) {
            mom.m = Matrix(e.value.rows, e.value.cols, 0.0);
            mom.v = Matrix(e.value.rows, e.value.cols, 0.0);
        }
        for (size_t i = 0; i < e.value.size(); ++i) {
            double g = e.grad.v[i];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in parameter " + e.name);
            mom.m.v[i] = cfg_.beta1 * mom.m.v[i] + (1.0 - cfg_.beta1) * g;
            mom.v.v[i] = cfg_.beta2 * mom.v.v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = mom.m.v[i] / bc1;
            double vhat = mom.v.v[i] / bc2;
            // decoupled weight decay
            e.value.v[i] -= cfg_.lr * cfg_.weight_decay * e.value.v[i];
            e.value.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        e.grad.fill(0.0);
    }
}

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void write_string(std::ostream& os, const std::string& s) {
    io::write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    uint32_t n = io::read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

void write_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
    write_string(os, name);
    io::write_u32(os, static_cast<uint32_t>(m.rows));
    io::write_u32(os, static_cast<uint32_t>(m.cols));
    for (double x : m.v) io::write_f64(os, x);
}

std::pair<std::string, Matrix> read_tensor(std::istream& is) {
    std::string name = read_string(is);
    uint32_t rows = io::read_u32(is);
    uint32_t cols = io::read_u32(is);
    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    for (double& x : m.v) x = io::read_f64(is);
    return {name, std::move(m)};
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& params, const AdamW* opt) {
    auto os = io::open_out(path);
    io::write_magic(os, "TCAC");
    io::write_u32(os, kCheckpointVersion);
    io::write_u32(os, static_cast<uint32_t>(params.entries().size()));
    for (const auto& e : params.entries()) write_tensor(os, e.name, e.value);
    io::write_u32(os, opt ? 1u : 0u);
    if (opt) {
        io::write_u64(os, static_cast<uint64_t>(const_cast<AdamW*>(opt)->step_count()));
        auto& moments = const_cast<AdamW*>(opt)->moments();
        // write in parameter order so the file is deterministic
        uint32_t n = 0;
        for (const auto& e : params.entries())
            if (moments.count(e.name)) ++n;
        io::write_u32(os, n);
        for (const auto& e : params.entries()) {
            auto it = moments.find(e.name);
            if (it == moments.end()) continue;
            write_tensor(os, e.name + ".m", it->second.m);
            write_tensor(os, e.name + ".v", it->second.v);
        }
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, ParameterStore& params, AdamW* opt) {
    auto is = io::open_in(path);
    io::expect_magic(is, "TCAC", "checkpoint");
    uint32_t version = io::read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint32_t n = io::read_u32(is);
    for (uint32_t i = 0; i < n; ++i) {
        auto [name, m] = read_tensor(is);
        if (params.has(name)) {
            Matrix& dst = params.value(name);
            if (!dst.same_shape(m))
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
            dst = std::move(m);
        } else {
            params.add(name, std::move(m));
        }
    }
    uint32_t has_opt = io::read_u32(is);
    if (has_opt && opt) {
        opt->set_step_count(static_cast<int64_t>(io::read_u64(is)));
        uint32_t nm = io::read_u32(is);
        for (uint32_t i = 0; i < nm; ++i) {
            auto [mname, mm] = read_tensor(is);
            auto [vname, vm] = read_tensor(is);
            std::string base = mname.substr(0, mname.size() - 2);
            if (vname.substr(0, vname.size() - 2) != base)
                throw std::runtime_error("checkpoint: optimizer state out of order");
            opt->moments()[base] = {std::move(mm), std::move(vm)};
        }
    }
}

}  // namespace tokalign
