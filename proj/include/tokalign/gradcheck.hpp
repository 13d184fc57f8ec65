#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tokalign/params.hpp"

namespace tokalign {

// f(params) evaluates a scalar and, when accumulate_grads is true, adds
// d(scalar)/d(param) into the store's gradient slots.
using ScalarFn = std::function<double(ParameterStore&, bool accumulate_grads)>;

struct GradCheckEntry {
    std::string param;
    size_t index;
    double analytic;
    double numeric;
    double rel_err;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<GradCheckEntry> worst;  // entries above tolerance, plus the max
    size_t n_checked = 0;

    bool ok(double rel_tol) const { return max_rel_err < rel_tol; }
};

// Central finite differences at step h against the analytic gradient, over a
// random subset of at most max_entries_per_param entries per parameter.
GradCheckReport grad_check(const ScalarFn& f, ParameterStore& params, double h = 1e-4,
                           size_t max_entries_per_param = 16, uint64_t seed = 1234);

}  // namespace tokalign
