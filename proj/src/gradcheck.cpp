#include "tokalign/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tokalign {

GradCheckReport grad_check(const ScalarFn& f, ParameterStore& params, double h,
                           size_t max_entries_per_param, uint64_t seed) {
    params.zero_grad();
    f(params, true);

    GradCheckReport report;
    std::mt19937_64 rng(seed);
    for (auto& e : params.entries()) {
        std::vector<size_t> idx(e.value.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (idx.size() > max_entries_per_param) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries_per_param);
        }
        for (size_t i : idx) {
            double saved = e.value.v[i];
            e.value.v[i] = saved + h;
            double fp = f(params, false);
            e.value.v[i] = saved - h;
            double fm = f(params, false);
            e.value.v[i] = saved;
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = e.grad.v[i];
            // below ~h^2 both sides are finite-difference noise; call those exact
            double rel = 0.0;
            if (std::abs(numeric - analytic) >= 1e-9) {
                double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
                rel = std::abs(numeric - analytic) / denom;
            }
            ++report.n_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst.push_back({e.name, i, analytic, numeric, rel});
            }
        }
    }
    params.zero_grad();
    return report;
}

}  // namespace tokalign
