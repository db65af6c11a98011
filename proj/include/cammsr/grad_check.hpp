#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cammsr/params.hpp"

namespace cammsr {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    size_t checked = 0;
};

// Central-difference oracle: compares an already-populated analytic gradient
// against (f(th+eps) - f(th-eps)) / (2 eps) for every scalar parameter entry.
// Relative error is used except where |grad| < 1e-8, where absolute error
// applies; in between the denominator is floored at 1e-5 because the
// difference quotient itself carries ~|f|*ulp/(2 eps) of roundoff, which
// would otherwise dominate the ratio for gradients below ~1e-6. Intended for
// double-precision models with dropout disabled or masks frozen, so that f
// is smooth and deterministic.
inline GradCheckReport grad_check(const std::function<double()>& f, ParamSet<double>& params,
                                  const std::vector<std::vector<double>>& analytic_grads, double eps = 1e-5) {
    if (analytic_grads.size() != params.items().size())
        throw ContractError("grad_check: analytic gradient count mismatch");
    GradCheckReport report;
    for (size_t p = 0; p < params.items().size(); ++p) {
        auto& [name, t] = params.items()[p];
        if (analytic_grads[p].size() != t->numel())
            throw ContractError("grad_check: analytic gradient shape mismatch for " + name);
        for (size_t i = 0; i < t->numel(); ++i) {
            const double saved = t->v[i];
            t->v[i] = saved + eps;
            const double fp = f();
            t->v[i] = saved - eps;
            const double fm = f();
            t->v[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = analytic_grads[p][i];
            double err;
            if (std::abs(analytic) < 1e-8 && std::abs(numeric) < 1e-8) {
                err = std::abs(analytic - numeric);
            } else {
                err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
            }
            ++report.checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = name;
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

// Convenience wrapper: runs f once with gradients (caller-provided closure
// must populate grads via tape backward), snapshots them, then compares.
inline GradCheckReport grad_check_populated(const std::function<double()>& f_with_backward,
                                            const std::function<double()>& f_plain, ParamSet<double>& params,
                                            double eps = 1e-5) {
    params.zero_grad();
    f_with_backward();
    std::vector<std::vector<double>> grads;
    grads.reserve(params.items().size());
    for (const auto& [name, t] : params.items()) grads.push_back(t->g);
    return grad_check(f_plain, params, grads, eps);
}

}  // namespace cammsr
