#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "era/errors.hpp"
#include "era/tensor.hpp"

namespace era {

/// Outcome of one finite-difference sweep over a scalar function.
struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;   // flat coordinate with the largest error
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = false;
};

/**
 * Central finite-difference check of reverse-mode gradients.
 *
 * `f` must map (tape, x) to a scalar tensor and be deterministic in x. The
 * analytic gradient comes from one backward pass; the numeric one perturbs
 * every coordinate of x by +-eps. The per-coordinate error is
 *
 *     |analytic - numeric| / max(1, |analytic|, |numeric|)
 *
 * so it reads as a relative error for large gradients and an absolute one
 * near zero, where relative error is meaningless.
 */
inline GradCheckReport check_gradients(const std::function<Tensor(Tape&, Tensor&)>& f, Tensor x,
                                       double eps, double tolerance) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ParameterError("check_gradients: eps must lie in [1e-7, 1e-3]");
    }
    if (!(tolerance > 0.0)) {
        throw ParameterError("check_gradients: tolerance must be positive");
    }
    x.set_requires_grad(true);
    x.zero_grad();

    Tape tape;
    Tensor y = f(tape, x);
    if (!y.is_scalar()) {
        throw ContractError("check_gradients: f must return a scalar, got shape " + y.shape_string());
    }
    tape.backward(y);
    std::vector<double> analytic = x.grad();

    GradCheckReport report;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double saved = x.values()[i];
        double fp, fm;
        try {
            Tape tp;
            x.values()[i] = saved + eps;
            fp = f(tp, x).item();
            Tape tm;
            x.values()[i] = saved - eps;
            fm = f(tm, x).item();
        } catch (const NumericError& e) {
            x.values()[i] = saved;
            throw NumericError("check_gradients: non-finite while perturbing coordinate " +
                               std::to_string(i) + ": " + e.what());
        }
        x.values()[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("check_gradients: non-finite value at perturbed coordinate " +
                               std::to_string(i));
        }
        double numeric = (fp - fm) / (2.0 * eps);
        double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
        double rel = std::fabs(analytic[i] - numeric) / denom;
        if (rel >= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    return report;
}

} // namespace era
