#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "era/errors.hpp"
#include "era/tensor.hpp"

namespace era {

// ============================================================================
// Scheduling
// ============================================================================

/// Weighting profile for the per-stage losses, indexed by stage k.
enum class ScheduleKind {
    exp_decay,         // 1 / 2^k
    linear_decay,      // 1 / (1 + k)
    constant,          // 1
    increasing_linear, // k
    increasing_exp,    // 2^k
    biased_first,      // 1 for k = 0, 1e-6 afterwards
    linear_fade,       // 1 for k = 0, 1 - epoch_fraction afterwards
};

inline const char* to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::exp_decay: return "exp_decay";
        case ScheduleKind::linear_decay: return "linear_decay";
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::increasing_linear: return "increasing_linear";
        case ScheduleKind::increasing_exp: return "increasing_exp";
        case ScheduleKind::biased_first: return "biased_first";
        case ScheduleKind::linear_fade: return "linear_fade";
    }
    throw ContractError("to_string: unhandled ScheduleKind");
}

inline ScheduleKind parse_schedule(const std::string& name) {
    if (name == "exp_decay") return ScheduleKind::exp_decay;
    if (name == "linear_decay") return ScheduleKind::linear_decay;
    if (name == "constant") return ScheduleKind::constant;
    if (name == "increasing_linear") return ScheduleKind::increasing_linear;
    if (name == "increasing_exp") return ScheduleKind::increasing_exp;
    if (name == "biased_first") return ScheduleKind::biased_first;
    if (name == "linear_fade") return ScheduleKind::linear_fade;
    throw ConfigError("unknown schedule kind '" + name + "'");
}

/// Stage weight s_k. `epoch_fraction` (elapsed/total, in [0, 1]) only
/// matters for the fading schedule but is validated for all of them.
inline double schedule_s(std::size_t k, ScheduleKind kind, double epoch_fraction) {
    if (!(epoch_fraction >= 0.0 && epoch_fraction <= 1.0)) {
        throw ParameterError("schedule_s: epoch_fraction must lie in [0, 1]");
    }
    switch (kind) {
        case ScheduleKind::exp_decay:
            return 1.0 / static_cast<double>(std::uint64_t{1} << k);
        case ScheduleKind::linear_decay:
            return 1.0 / (1.0 + static_cast<double>(k));
        case ScheduleKind::constant:
            return 1.0;
        case ScheduleKind::increasing_linear:
            return static_cast<double>(k);
        case ScheduleKind::increasing_exp:
            return static_cast<double>(std::uint64_t{1} << k);
        case ScheduleKind::biased_first:
            return k == 0 ? 1.0 : 1e-6;
        case ScheduleKind::linear_fade:
            return k == 0 ? 1.0 : 1.0 - epoch_fraction;
    }
    throw ContractError("schedule_s: unhandled ScheduleKind");
}

/// Loss hyperparameters. alpha/beta weight the logit-level terms, gamma and
/// lambda the per-stage feature and classification terms.
struct LossWeights {
    double alpha = 1.0;
    double beta = 2.0;
    double gamma = 1.0;
    double lambda = 1.0;
    double temperature = 4.0;
    double mu = 0.5;  // S/T blend for merged inference
    ScheduleKind schedule = ScheduleKind::exp_decay;
};

// ============================================================================
// Losses
// ============================================================================

constexpr double kProbClamp = 1e-12;

/**
 * Mean negative log-likelihood of the labeled class.
 *
 * Probabilities are clamped at 1e-12 before the log; a clamped entry is
 * treated as constant, so its gradient is zero.
 */
inline Tensor cross_entropy(Tape& tape, const Tensor& probs, const std::vector<std::size_t>& labels) {
    detail::ensure_2d(probs, "cross_entropy");
    std::size_t n = probs.shape()[0], m = probs.shape()[1];
    if (labels.size() != n) {
        throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= m) {
            throw InputError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " is out of range for " + std::to_string(m) +
                             " classes");
        }
        double row = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            row += probs.values()[i * m + j];
        }
        if (std::fabs(row - 1.0) > 1e-6) {
            throw InputError("cross_entropy: row " + std::to_string(i) + " sums to " +
                             std::to_string(row) + ", expected 1");
        }
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += -std::log(std::max(probs.values()[i * m + labels[i]], kProbClamp));
    }
    double value = acc / static_cast<double>(n);
    bool ng = probs.requires_grad();
    Tensor result = Tensor::from({1}, {value}, ng);
    detail::ensure_finite(result, "cross_entropy");
    if (ng) {
        tape.record(result, [probs, labels, result, n, m]() {
            double g = result.grad()[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                double p = probs.values()[i * m + labels[i]];
                if (p > kProbClamp) {
                    probs.grad()[i * m + labels[i]] -= g / p;
                }
            }
        });
    }
    return result;
}

/**
 * Temperature-scaled distillation divergence
 *
 *     T^2 * mean_n KL( softmax(g_t/T) || softmax(g_s/T) )
 *
 * The teacher side is a constant by contract: no gradient ever reaches
 * `logits_t`, whether or not it is tracked.
 */
inline Tensor kl_distillation(Tape& tape, const Tensor& logits_t, const Tensor& logits_s,
                              double temperature) {
    detail::ensure_2d(logits_t, "kl_distillation");
    detail::ensure_2d(logits_s, "kl_distillation");
    detail::ensure_same_shape(logits_t, logits_s, "kl_distillation");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("kl_distillation: temperature must be positive and finite");
    }
    std::size_t n = logits_t.shape()[0], m = logits_t.shape()[1];

    // Row-wise log-softmax of z/T, shifted by the row maximum.
    auto log_softmax = [&](const Tensor& z, std::vector<double>& out) {
        out.resize(n * m);
        for (std::size_t i = 0; i < n; ++i) {
            double hi = z.values()[i * m];
            for (std::size_t j = 1; j < m; ++j) {
                hi = std::max(hi, z.values()[i * m + j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                denom += std::exp((z.values()[i * m + j] - hi) / temperature);
            }
            double log_denom = std::log(denom);
            for (std::size_t j = 0; j < m; ++j) {
                out[i * m + j] = (z.values()[i * m + j] - hi) / temperature - log_denom;
            }
        }
    };
    std::vector<double> log_pt, log_ps;
    log_softmax(logits_t, log_pt);
    log_softmax(logits_s, log_ps);

    double acc = 0.0;
    for (std::size_t i = 0; i < n * m; ++i) {
        acc += std::exp(log_pt[i]) * (log_pt[i] - log_ps[i]);
    }
    double t2 = temperature * temperature;
    double value = t2 * acc / static_cast<double>(n);

    bool ng = logits_s.requires_grad();
    Tensor result = Tensor::from({1}, {value}, ng);
    detail::ensure_finite(result, "kl_distillation");
    if (ng) {
        tape.record(result, [logits_s, result, log_pt, log_ps, n, m, temperature]() {
            // d/dg_s = (T/n) * (p_s - p_t) per entry.
            double g = result.grad()[0] * temperature / static_cast<double>(n);
            for (std::size_t i = 0; i < n * m; ++i) {
                logits_s.grad()[i] += g * (std::exp(log_ps[i]) - std::exp(log_pt[i]));
            }
        });
    }
    return result;
}

/**
 * Mean over the batch of the squared Euclidean distance between rows of
 * `target` and `pred`. The target is treated as a constant: gradient flows
 * to `pred` only.
 */
inline Tensor feature_mse(Tape& tape, const Tensor& target, const Tensor& pred) {
    detail::ensure_2d(target, "feature_mse");
    detail::ensure_2d(pred, "feature_mse");
    detail::ensure_same_shape(target, pred, "feature_mse");
    std::size_t n = target.shape()[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < target.numel(); ++i) {
        double d = target.values()[i] - pred.values()[i];
        acc += d * d;
    }
    double value = acc / static_cast<double>(n);
    bool ng = pred.requires_grad();
    Tensor result = Tensor::from({1}, {value}, ng);
    detail::ensure_finite(result, "feature_mse");
    if (ng) {
        tape.record(result, [target, pred, result, n]() {
            double g = 2.0 * result.grad()[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < pred.numel(); ++i) {
                pred.grad()[i] += g * (pred.values()[i] - target.values()[i]);
            }
        });
    }
    return result;
}

/// Two-sided variant of feature_mse for the non-detached ablation: same
/// value, but gradients reach both operands.
inline Tensor symmetric_feature_mse(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::ensure_2d(a, "symmetric_feature_mse");
    detail::ensure_same_shape(a, b, "symmetric_feature_mse");
    Tensor diff = sub(tape, a, b);
    Tensor squared = mul(tape, diff, diff);
    return scale(tape, sum(tape, squared), 1.0 / static_cast<double>(a.shape()[0]));
}

/// Logit-level distillation loss: alpha * CE(y, softmax(g_s)) plus
/// beta * T^2-scaled KL between the softened teacher and student logits.
/// The hard CE term uses temperature 1; only the KL term is softened.
inline Tensor logit_distillation_loss(Tape& tape, const Tensor& logits_t, const Tensor& logits_s,
                                      const std::vector<std::size_t>& labels, const LossWeights& w) {
    Tensor ce = cross_entropy(tape, softmax_with_temperature(tape, logits_s, 1.0), labels);
    Tensor kl = kl_distillation(tape, logits_t, logits_s, w.temperature);
    return add(tape, scale(tape, ce, w.alpha), scale(tape, kl, w.beta));
}

/**
 * Full objective: kd + sum_k s_k * (gamma * fd_k + lambda * cls_k).
 *
 * `fd_stage_losses` holds stages 0..K; `cls_stage_losses` holds stages 1..K
 * (stage 0 has no classification term). Every entry must be a scalar that
 * was produced on the same tape.
 */
inline Tensor total_era_loss(Tape& tape, const Tensor& kd, const std::vector<Tensor>& fd_stage_losses,
                             const std::vector<Tensor>& cls_stage_losses, const LossWeights& w,
                             double epoch_fraction) {
    if (fd_stage_losses.empty()) {
        throw ContractError("total_era_loss: stage 0 feature loss is required");
    }
    if (cls_stage_losses.size() + 1 != fd_stage_losses.size()) {
        throw ContractError("total_era_loss: got " + std::to_string(fd_stage_losses.size()) +
                            " feature losses but " + std::to_string(cls_stage_losses.size()) +
                            " classification losses; expected one fewer");
    }
    if (!kd.is_scalar()) {
        throw ContractError("total_era_loss: kd term must be scalar");
    }
    Tensor total = kd;
    for (std::size_t k = 0; k < fd_stage_losses.size(); ++k) {
        if (!fd_stage_losses[k].is_scalar() || (k >= 1 && !cls_stage_losses[k - 1].is_scalar())) {
            throw ContractError("total_era_loss: stage " + std::to_string(k) + " terms must be scalar");
        }
        double s_k = schedule_s(k, w.schedule, epoch_fraction);
        Tensor term = scale(tape, fd_stage_losses[k], s_k * w.gamma);
        if (k >= 1) {
            term = add(tape, term, scale(tape, cls_stage_losses[k - 1], s_k * w.lambda));
        }
        total = add(tape, total, term);
    }
    return total;
}

} // namespace era
