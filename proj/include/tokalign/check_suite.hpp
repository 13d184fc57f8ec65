#pragma once

#include <string>
#include <vector>

#include "tokalign/gradcheck.hpp"

namespace tokalign {

struct CheckResult {
    std::string name;
    GradCheckReport report;
    bool ok;
};

// Gradient checks over the model's building blocks at tiny sizes: linear
// layer, BiLSTM layer, layer norm + residual, self-attention, cross-modal
// attention, both contrastive losses, the classifier head, and a small
// end-to-end pretraining loss. All analytic gradients are compared against
// central finite differences.
std::vector<CheckResult> run_check_suite(double rel_tol = 1e-4, uint64_t seed = 99);

}  // namespace tokalign
