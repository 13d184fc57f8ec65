#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokalign/audio.hpp"
#include "tokalign/cross_modal.hpp"
#include "tokalign/encoder.hpp"

namespace tokalign {

// Flat dotted-key configuration document. Paper hyperparameters are the
// defaults; unknown keys are rejected.
struct RunConfig {
    uint64_t seed = 7;

    EncoderConfig encoder;          // 9 layers / 3 pyramid / 12 heads at full scale
    bool crossmodal_scale_logits = false;

    // pretraining
    int pretrain_batch_size = 8;    // paper: 64; desk default 8
    double pretrain_lr = 1e-4;
    double pretrain_tau = 0.07;
    int pretrain_max_steps = 2000;
    std::string pretrain_loss_mode = "tokenwise";  // tokenwise | sequence
    bool pretrain_keep_tau_factor = true;
    int pretrain_eval_every = 100;
    double pretrain_weight_decay = 0.01;

    // fine-tuning
    double finetune_lr = 2e-5;
    int finetune_n_classes = 4;
    int finetune_batch_size = 8;
    int finetune_max_epochs = 20;
    bool finetune_specaugment = false;
    int finetune_patience = 5;
    double finetune_weight_decay = 0.01;

    SpecAugmentPolicy specaugment;  // widths 15 / 70, 2+2 masks

    CrossModalConfig cross_modal_config() const { return {encoder.d, crossmodal_scale_logits}; }
    void validate() const;
};

RunConfig load_run_config(const std::string& path);
// Applies "key=value" overrides (same keys as the file format).
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace tokalign
