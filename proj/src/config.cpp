#include "tokalign/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tokalign {

namespace {

struct Binding {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_value(const std::string& s);

template <>
int parse_value<int>(const std::string& s) { return std::stoi(s); }
template <>
uint64_t parse_value<uint64_t>(const std::string& s) { return std::stoull(s); }
template <>
double parse_value<double>(const std::string& s) { return std::stod(s); }
template <>
std::string parse_value<std::string>(const std::string& s) { return s; }
template <>
bool parse_value<bool>(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("expected boolean, got '" + s + "'");
}

template <typename T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
    else if constexpr (std::is_same_v<T, std::string>) return v;
    else {
        std::ostringstream os;
        os << v;
        return os.str();
    }
}

template <typename T>
Binding bind_field(T RunConfig::* member) {
    return {[member](RunConfig& c, const std::string& s) { c.*member = parse_value<T>(s); },
            [member](const RunConfig& c) { return format_value(c.*member); }};
}

template <typename Sub, typename T>
Binding bind2(Sub RunConfig::* sub, T Sub::* member) {
    return {[sub, member](RunConfig& c, const std::string& s) { c.*sub.*member = parse_value<T>(s); },
            [sub, member](const RunConfig& c) { return format_value(c.*sub.*member); }};
}

const std::map<std::string, Binding>& bindings() {
    static const std::map<std::string, Binding> table = {
        {"seed", bind_field(&RunConfig::seed)},
        {"encoder.n_mels", bind2(&RunConfig::encoder, &EncoderConfig::n_mels)},
        {"encoder.n_layers", bind2(&RunConfig::encoder, &EncoderConfig::n_layers)},
        {"encoder.n_pyramid", bind2(&RunConfig::encoder, &EncoderConfig::n_pyramid)},
        {"encoder.hidden", bind2(&RunConfig::encoder, &EncoderConfig::hidden)},
        {"encoder.d", bind2(&RunConfig::encoder, &EncoderConfig::d)},
        {"encoder.n_heads", bind2(&RunConfig::encoder, &EncoderConfig::n_heads)},
        {"encoder.dropout", bind2(&RunConfig::encoder, &EncoderConfig::dropout)},
        {"crossmodal.scale_logits", bind_field(&RunConfig::crossmodal_scale_logits)},
        {"pretrain.batch_size", bind_field(&RunConfig::pretrain_batch_size)},
        {"pretrain.lr", bind_field(&RunConfig::pretrain_lr)},
        {"pretrain.tau", bind_field(&RunConfig::pretrain_tau)},
        {"pretrain.max_steps", bind_field(&RunConfig::pretrain_max_steps)},
        {"pretrain.loss_mode", bind_field(&RunConfig::pretrain_loss_mode)},
        {"pretrain.keep_tau_factor", bind_field(&RunConfig::pretrain_keep_tau_factor)},
        {"pretrain.eval_every", bind_field(&RunConfig::pretrain_eval_every)},
        {"pretrain.weight_decay", bind_field(&RunConfig::pretrain_weight_decay)},
        {"finetune.lr", bind_field(&RunConfig::finetune_lr)},
        {"finetune.n_classes", bind_field(&RunConfig::finetune_n_classes)},
        {"finetune.batch_size", bind_field(&RunConfig::finetune_batch_size)},
        {"finetune.max_epochs", bind_field(&RunConfig::finetune_max_epochs)},
        {"finetune.specaugment", bind_field(&RunConfig::finetune_specaugment)},
        {"finetune.patience", bind_field(&RunConfig::finetune_patience)},
        {"finetune.weight_decay", bind_field(&RunConfig::finetune_weight_decay)},
        {"specaugment.freq_mask_width", bind2(&RunConfig::specaugment, &SpecAugmentPolicy::freq_mask_width)},
        {"specaugment.time_mask_width", bind2(&RunConfig::specaugment, &SpecAugmentPolicy::time_mask_width)},
        {"specaugment.n_freq_masks", bind2(&RunConfig::specaugment, &SpecAugmentPolicy::n_freq_masks)},
        {"specaugment.n_time_masks", bind2(&RunConfig::specaugment, &SpecAugmentPolicy::n_time_masks)},
    };
    return table;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto it = bindings().find(key);
    if (it == bindings().end()) throw std::invalid_argument("unknown config key: " + key);
    try {
        it->second.set(cfg, value);
    } catch (const std::exception& e) {
        throw std::invalid_argument("config key " + key + ": " + e.what());
    }
}

}  // namespace

void RunConfig::validate() const {
    encoder.validate();
    if (pretrain_batch_size < 1) throw std::invalid_argument("pretrain.batch_size must be >= 1");
    if (pretrain_tau <= 0.0) throw std::invalid_argument("pretrain.tau must be positive");
    if (pretrain_loss_mode != "tokenwise" && pretrain_loss_mode != "sequence")
        throw std::invalid_argument("pretrain.loss_mode must be tokenwise or sequence");
    if (finetune_n_classes < 2) throw std::invalid_argument("finetune.n_classes must be >= 2");
    if (specaugment.freq_mask_width > encoder.n_mels)
        throw std::invalid_argument("specaugment.freq_mask_width exceeds encoder.n_mels");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t h = line.find('#');
        if (h != std::string::npos) line.resize(h);
        // trim
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto strip = [](std::string s) {
            auto b2 = s.find_first_not_of(" \t");
            auto e2 = s.find_last_not_of(" \t");
            return b2 == std::string::npos ? std::string() : s.substr(b2, e2 - b2 + 1);
        };
        set_key(cfg, strip(key), strip(value));
    }
    return cfg;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must be key=value: " + ov);
        set_key(cfg, ov.substr(0, eq), ov.substr(eq + 1));
    }
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config: " + path);
    for (const auto& [key, binding] : bindings()) os << key << "=" << binding.get(cfg) << "\n";
}

}  // namespace tokalign
