#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "era/data.hpp"
#include "era/errors.hpp"
#include "era/inference.hpp"
#include "era/losses.hpp"
#include "era/model.hpp"

namespace era {

// ============================================================================
// Optimizer
// ============================================================================

/// SGD with classical momentum and decoupled-from-nothing weight decay: the
/// decay term is folded into the gradient before the velocity update, the
/// common formulation for this family of models. Velocity buffers are keyed
/// by parameter name so they survive checkpointing and freeze toggles.
class SgdMomentum {
  public:
    SgdMomentum(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {
        if (momentum < 0.0 || momentum >= 1.0) {
            throw ParameterError("SgdMomentum: momentum must lie in [0, 1)");
        }
        if (weight_decay < 0.0) {
            throw ParameterError("SgdMomentum: weight_decay must be non-negative");
        }
    }

    /// One update over every trainable parameter the model exposes. Frozen
    /// parameters are skipped entirely, including their weight decay.
    template <class ModelT>
    void step(ModelT& model, double lr) {
        model.visit_params([&](const std::string& name, Tensor& param) {
            if (!param.requires_grad()) {
                return;
            }
            auto [it, inserted] = velocity_.try_emplace(name);
            if (inserted) {
                it->second = Tensor::zeros(param.shape());
            }
            Tensor& vel = it->second;
            for (std::size_t i = 0; i < param.numel(); ++i) {
                double g = param.grad()[i] + weight_decay_ * param.values()[i];
                vel.values()[i] = momentum_ * vel.values()[i] + g;
                param.values()[i] -= lr * vel.values()[i];
                if (!std::isfinite(param.values()[i])) {
                    throw NumericError("SgdMomentum: parameter '" + name +
                                       "' became non-finite after the update");
                }
            }
        });
    }

    template <class ModelT>
    void zero_grad(ModelT& model) {
        model.visit_params([&](const std::string&, Tensor& param) { param.zero_grad(); });
    }

    std::map<std::string, Tensor>& velocity() { return velocity_; }
    const std::map<std::string, Tensor>& velocity() const { return velocity_; }
    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

  private:
    double momentum_;
    double weight_decay_;
    std::map<std::string, Tensor> velocity_;
};

// ============================================================================
// Run configuration
// ============================================================================

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    std::size_t halt_after = 0;  // absolute epoch to stop at; 0 runs to `epochs`
    LossWeights weights;

    void validate() const {
        if (epochs == 0) {
            throw ConfigError("TrainConfig: epochs must be positive");
        }
        if (batch_size < 2) {
            throw ConfigError("TrainConfig: batch_size must be at least 2 (batch norm)");
        }
        if (!(learning_rate > 0.0)) {
            throw ConfigError("TrainConfig: learning_rate must be positive");
        }
        if (momentum < 0.0 || momentum >= 1.0) {
            throw ConfigError("TrainConfig: momentum must lie in [0, 1)");
        }
        if (weight_decay < 0.0) {
            throw ConfigError("TrainConfig: weight_decay must be non-negative");
        }
    }
};

/// Step decay: base rate, then x0.1 at 50% and again at 75% of the run.
inline double lr_at(double base, std::size_t epoch, std::size_t total_epochs) {
    double lr = base;
    if (total_epochs > 0 && epoch >= total_epochs / 2) {
        lr *= 0.1;
    }
    if (total_epochs > 0 && epoch >= total_epochs * 3 / 4) {
        lr *= 0.1;
    }
    return lr;
}

/// Progress through the run in [0, 1], used by fading schedules.
inline double epoch_fraction(std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs <= 1) {
        return 0.0;
    }
    double f = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
    return f > 1.0 ? 1.0 : f;
}

// ============================================================================
// Loss assembly
// ============================================================================

struct LossBundle {
    Tensor total;
    Tensor kd;
    std::vector<Tensor> fd;   // stages 0..K
    std::vector<Tensor> cls;  // stages 1..K
    double approx_error = 0.0;
};

namespace detail {

template <class Fn>
auto named_term(const char* term, Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        throw NumericError(std::string(term) + ": " + e.what());
    }
}

} // namespace detail

/// Builds every loss term of one batch on the given tape. Works in either
/// mode; callers that only want the values should put the model in eval mode
/// first so batch-norm statistics stay untouched.
inline LossBundle build_losses(Tape& tape, EraModel& model, const Batch& batch,
                               const LossWeights& weights, double epoch_frac) {
    LossBundle bundle;
    ResidualState state = detail::named_term(
        "forward", [&] { return cascade_forward(tape, model, batch.x); });
    bundle.approx_error = state.approx_error;

    Tensor logits_s = model.head_s.forward(tape, state.f_s);
    Tensor logits_t = model.head_t.forward(tape, state.f_t);
    bundle.kd = detail::named_term("loss_kd", [&] {
        return logit_distillation_loss(tape, logits_t, logits_s, batch.labels, weights);
    });

    std::size_t stages = model.topology.stages;
    for (std::size_t k = 0; k <= stages; ++k) {
        bundle.fd.push_back(detail::named_term(("loss_fd_" + std::to_string(k)).c_str(), [&] {
            return model.detach_targets
                       ? feature_mse(tape, state.targets[k], state.projected[k])
                       : symmetric_feature_mse(tape, state.targets[k], state.projected[k]);
        }));
    }
    for (std::size_t k = 1; k <= stages; ++k) {
        bundle.cls.push_back(detail::named_term(("loss_cls_" + std::to_string(k)).c_str(), [&] {
            Tensor logits_k = model.head_t.forward(tape, state.fhat[k]);
            Tensor probs_k = softmax_with_temperature(tape, logits_k, 1.0);
            return cross_entropy(tape, probs_k, batch.labels);
        }));
    }
    bundle.total = detail::named_term("loss_total", [&] {
        return total_era_loss(tape, bundle.kd, bundle.fd, bundle.cls, weights, epoch_frac);
    });
    return bundle;
}

// ============================================================================
// Training steps and loops
// ============================================================================

struct StepMetrics {
    double loss_total = 0.0;
    double loss_kd = 0.0;
    std::vector<double> loss_fd;   // stages 0..K
    std::vector<double> loss_cls;  // stages 1..K
    double approx_error = 0.0;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double loss_total = 0.0;
    double loss_kd = 0.0;
    std::vector<double> loss_fd;
    std::vector<double> loss_cls;
    double approx_error = 0.0;
    double acc_s = 0.0;
    double acc_t = 0.0;
    double acc_st = 0.0;
};

/// One joint update of student, projections, and branches. The model must be
/// in train mode with the teacher frozen (the model enforces the latter).
inline StepMetrics train_step(EraModel& model, SgdMomentum& opt, const Batch& batch,
                              const LossWeights& weights, double epoch_frac, double lr) {
    Tape tape;
    LossBundle bundle = build_losses(tape, model, batch, weights, epoch_frac);

    StepMetrics metrics;
    metrics.loss_total = bundle.total.item();
    metrics.loss_kd = bundle.kd.item();
    for (const Tensor& t : bundle.fd) {
        metrics.loss_fd.push_back(t.item());
    }
    for (const Tensor& t : bundle.cls) {
        metrics.loss_cls.push_back(t.item());
    }
    metrics.approx_error = bundle.approx_error;

    tape.backward(bundle.total);
    opt.step(model, lr);
    opt.zero_grad(model);
    return metrics;
}

struct TeacherEpoch {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TeacherTrainResult {
    TeacherModel model;
    std::vector<TeacherEpoch> history;
};

inline double teacher_accuracy(TeacherModel& teacher, const Dataset& ds,
                               std::size_t batch_size = 256) {
    ds.validate();
    std::size_t hits = 0;
    for (const Batch& batch : ordered_batches(ds, batch_size)) {
        Tape tape;
        Tensor features = teacher.encoder.forward(tape, batch.x);
        Tensor logits = teacher.head.forward(tape, features);
        for (std::size_t i = 0; i < batch.labels.size(); ++i) {
            hits += detail::argmax_row(logits, i) == batch.labels[i] ? 1 : 0;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

/// Plain cross-entropy pretraining. The returned teacher is frozen and in
/// eval mode, ready for adopt_teacher.
inline TeacherTrainResult train_teacher(const std::vector<std::size_t>& widths,
                                        std::size_t classes, const Dataset& train_ds,
                                        const Dataset& test_ds, const TrainConfig& cfg) {
    cfg.validate();
    TeacherTrainResult result;
    result.model = TeacherModel(widths, classes);
    result.model.init(cfg.seed);
    SgdMomentum opt(cfg.momentum, cfg.weight_decay);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        result.model.set_mode(Mode::train);
        double lr = lr_at(cfg.learning_rate, epoch, cfg.epochs);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (const Batch& batch : batches(train_ds, cfg.batch_size, cfg.seed, epoch)) {
            Tape tape;
            Tensor features = result.model.encoder.forward(tape, batch.x);
            Tensor logits = result.model.head.forward(tape, features);
            Tensor probs = softmax_with_temperature(tape, logits, 1.0);
            Tensor loss = detail::named_term(
                "loss_ce", [&] { return cross_entropy(tape, probs, batch.labels); });
            loss_sum += loss.item();
            ++steps;
            tape.backward(loss);
            opt.step(result.model, lr);
            opt.zero_grad(result.model);
        }
        result.model.set_mode(Mode::eval);
        TeacherEpoch row;
        row.epoch = epoch + 1;
        row.loss = loss_sum / static_cast<double>(steps);
        row.accuracy = teacher_accuracy(result.model, test_ds);
        result.history.push_back(row);
    }
    result.model.set_trainable(false);
    result.model.set_mode(Mode::eval);
    return result;
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Runs epochs [start_epoch, stop) of joint distillation, where stop is
/// cfg.epochs or cfg.halt_after, whichever comes first. All cross-epoch
/// state lives in the model and optimizer, so a halted run resumed with the
/// same objects continues bit-identically.
inline std::vector<EpochMetrics> distill(EraModel& model, SgdMomentum& opt,
                                         const Dataset& train_ds, const Dataset& test_ds,
                                         const TrainConfig& cfg, std::size_t start_epoch = 0,
                                         const EpochCallback& on_epoch = nullptr) {
    cfg.validate();
    std::size_t stop = cfg.epochs;
    if (cfg.halt_after != 0 && cfg.halt_after < stop) {
        stop = cfg.halt_after;
    }
    if (start_epoch > stop) {
        throw StateError("distill: start epoch " + std::to_string(start_epoch) +
                         " lies beyond the requested stop " + std::to_string(stop));
    }

    std::vector<EpochMetrics> history;
    for (std::size_t epoch = start_epoch; epoch < stop; ++epoch) {
        model.set_mode(Mode::train);
        double lr = lr_at(cfg.learning_rate, epoch, cfg.epochs);
        double frac = epoch_fraction(epoch, cfg.epochs);

        EpochMetrics em;
        em.epoch = epoch + 1;
        em.loss_fd.assign(model.topology.stages + 1, 0.0);
        em.loss_cls.assign(model.topology.stages, 0.0);
        std::size_t steps = 0;
        for (const Batch& batch : batches(train_ds, cfg.batch_size, cfg.seed, epoch)) {
            StepMetrics sm = train_step(model, opt, batch, cfg.weights, frac, lr);
            em.loss_total += sm.loss_total;
            em.loss_kd += sm.loss_kd;
            for (std::size_t k = 0; k < sm.loss_fd.size(); ++k) {
                em.loss_fd[k] += sm.loss_fd[k];
            }
            for (std::size_t k = 0; k < sm.loss_cls.size(); ++k) {
                em.loss_cls[k] += sm.loss_cls[k];
            }
            em.approx_error += sm.approx_error;
            ++steps;
        }
        double scale = 1.0 / static_cast<double>(steps);
        em.loss_total *= scale;
        em.loss_kd *= scale;
        for (double& v : em.loss_fd) {
            v *= scale;
        }
        for (double& v : em.loss_cls) {
            v *= scale;
        }
        em.approx_error *= scale;

        model.set_mode(Mode::eval);
        ModeAccuracies acc = evaluate_all_modes(model, test_ds, cfg.weights.mu);
        em.acc_s = acc.acc_s;
        em.acc_t = acc.acc_t;
        em.acc_st = acc.acc_st;
        history.push_back(em);
        if (on_epoch) {
            on_epoch(em);
        }
    }
    return history;
}

} // namespace era
