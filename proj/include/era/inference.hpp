#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "era/data.hpp"
#include "era/errors.hpp"
#include "era/model.hpp"

namespace era {

// ============================================================================
// Deployment-time prediction paths
// ============================================================================
//
// S  : student head over student features, the compressed deployment path.
// T  : teacher head over the reconstructed approximation f_hat_j.
// ST : elementwise convex blend mu * p_s + (1 - mu) * p_hat_t.

enum class InferenceMode { student, teacher_path, merged };

inline std::string to_string(InferenceMode mode) {
    switch (mode) {
    case InferenceMode::student: return "s";
    case InferenceMode::teacher_path: return "t";
    case InferenceMode::merged: return "st";
    }
    throw SpecError("to_string: unhandled inference mode");
}

inline InferenceMode parse_inference_mode(const std::string& text) {
    if (text == "s" || text == "S") {
        return InferenceMode::student;
    }
    if (text == "t" || text == "T") {
        return InferenceMode::teacher_path;
    }
    if (text == "st" || text == "ST") {
        return InferenceMode::merged;
    }
    throw ConfigError("parse_inference_mode: unknown mode '" + text + "' (expected s, t, or st)");
}

/// `active_branches` value meaning "use every stage the model has".
inline constexpr std::size_t kAllBranches = static_cast<std::size_t>(-1);

struct InferenceSpec {
    InferenceMode mode = InferenceMode::merged;
    double mu = 0.5;                                // blend weight, ST mode only
    std::size_t active_branches = kAllBranches;     // j, truncates the cascade
};

namespace detail {

inline void require_eval_mode(const EraModel& model) {
    bool ok = true;
    auto check = [&](const BatchNormLayer& bn) { ok = ok && bn.mode == Mode::eval; };
    for (const DenseBlock& block : model.student.blocks) {
        check(block.bn);
    }
    for (const ResMBranch& branch : model.branches) {
        for (const DenseBlock& block : branch.blocks) {
            check(block.bn);
        }
    }
    if (!ok) {
        throw StateError("infer: model must be in eval mode (batch-norm would mutate "
                         "running statistics)");
    }
}

inline std::size_t resolve_branch_count(const EraModel& model, const InferenceSpec& spec) {
    std::size_t stages = model.topology.stages;
    std::size_t j = spec.active_branches == kAllBranches ? stages : spec.active_branches;
    if (j > stages) {
        throw ParameterError("infer: active_branches " + std::to_string(j) +
                             " exceeds the model's stage count " + std::to_string(stages));
    }
    return j;
}

} // namespace detail

/// Class probabilities [batch x M] for the requested mode. The model must be
/// in eval mode; the call leaves it untouched.
inline Tensor infer(EraModel& model, const Tensor& x, const InferenceSpec& spec) {
    if (!(spec.mu >= 0.0 && spec.mu <= 1.0)) {
        throw ParameterError("infer: mu must lie in [0, 1], got " + std::to_string(spec.mu));
    }
    detail::require_eval_mode(model);
    std::size_t j = detail::resolve_branch_count(model, spec);

    Tape tape;
    if (spec.mode == InferenceMode::student) {
        Tensor f_s = model.student.forward(tape, x);
        Tensor logits = model.head_s.forward(tape, f_s);
        return softmax_with_temperature(tape, logits, 1.0);
    }

    ResidualState state = cascade_forward(tape, model, x);
    Tensor logits_t = model.head_t.forward(tape, state.fhat[j]);
    Tensor p_t = softmax_with_temperature(tape, logits_t, 1.0);
    if (spec.mode == InferenceMode::teacher_path) {
        return p_t;
    }

    Tensor logits_s = model.head_s.forward(tape, state.f_s);
    Tensor p_s = softmax_with_temperature(tape, logits_s, 1.0);
    std::vector<double> blended(p_s.numel());
    for (std::size_t i = 0; i < blended.size(); ++i) {
        blended[i] = spec.mu * p_s.values()[i] + (1.0 - spec.mu) * p_t.values()[i];
    }
    return Tensor::from(p_s.shape(), std::move(blended));
}

namespace detail {

inline std::size_t argmax_row(const Tensor& probs, std::size_t row) {
    std::size_t classes = probs.shape()[1];
    std::size_t best = 0;
    double best_value = probs.at(row, 0);
    for (std::size_t c = 1; c < classes; ++c) {
        if (probs.at(row, c) > best_value) {
            best_value = probs.at(row, c);
            best = c;
        }
    }
    return best;
}

} // namespace detail

/// Top-1 accuracy of the requested mode over a labeled dataset. Ties resolve
/// to the lowest class index, so results are deterministic.
inline double evaluate_accuracy(EraModel& model, const Dataset& ds, const InferenceSpec& spec,
                                std::size_t batch_size = 256) {
    ds.validate();
    if (ds.input_dim != model.topology.student_widths.front()) {
        throw TopologyError("evaluate_accuracy: dataset width " + std::to_string(ds.input_dim) +
                            " does not match student input width " +
                            std::to_string(model.topology.student_widths.front()));
    }
    if (ds.classes > model.topology.classes) {
        throw TopologyError("evaluate_accuracy: dataset has " + std::to_string(ds.classes) +
                            " classes, model only " + std::to_string(model.topology.classes));
    }
    std::size_t hits = 0;
    std::size_t cursor = 0;
    for (const Batch& batch : ordered_batches(ds, batch_size)) {
        Tensor probs = infer(model, batch.x, spec);
        for (std::size_t i = 0; i < batch.labels.size(); ++i, ++cursor) {
            hits += detail::argmax_row(probs, i) == batch.labels[i] ? 1 : 0;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

struct ModeAccuracies {
    double acc_s = 0.0;
    double acc_t = 0.0;
    double acc_st = 0.0;
};

/// Accuracy of all three modes with the full cascade (j = K).
inline ModeAccuracies evaluate_all_modes(EraModel& model, const Dataset& ds, double mu,
                                         std::size_t batch_size = 256) {
    ModeAccuracies out;
    InferenceSpec spec;
    spec.mode = InferenceMode::student;
    out.acc_s = evaluate_accuracy(model, ds, spec, batch_size);
    spec.mode = InferenceMode::teacher_path;
    out.acc_t = evaluate_accuracy(model, ds, spec, batch_size);
    spec.mode = InferenceMode::merged;
    spec.mu = mu;
    out.acc_st = evaluate_accuracy(model, ds, spec, batch_size);
    return out;
}

// ============================================================================
// Overhead accounting
// ============================================================================
//
// The T/ST paths add the projections and branches on top of the plain
// student. Parameters are exact counts; FLOPs use a fixed per-layer
// convention (per sample): a linear map in->out costs 2*in*out plus out for
// the bias, eval-mode batch norm costs 4 per channel, ReLU costs 1 per
// channel. The analytic numbers must agree with a walk over the
// instantiated model, integer-exactly.

struct OverheadReport {
    std::size_t parameters = 0;
    std::size_t flops_per_sample = 0;

    bool operator==(const OverheadReport&) const = default;
};

namespace detail {

inline std::size_t linear_flops(std::size_t in, std::size_t out, bool with_bias) {
    return 2 * in * out + (with_bias ? out : 0);
}

inline std::size_t dense_block_flops(std::size_t in, std::size_t out, bool relu_after) {
    return linear_flops(in, out, true) + 4 * out + (relu_after ? out : 0);
}

} // namespace detail

inline OverheadReport overhead_analytic(const EraTopology& topology) {
    topology.validate();
    std::size_t c_s = topology.student_widths.back();
    std::size_t c_t = topology.teacher_widths.back();
    std::size_t hidden = topology.branch_hidden == 0 ? c_s : topology.branch_hidden;

    OverheadReport report;
    // Projections P_0..P_K, each C_s -> C_t with bias.
    report.parameters += (topology.stages + 1) * (c_s * c_t + c_t);
    report.flops_per_sample += (topology.stages + 1) * detail::linear_flops(c_s, c_t, true);

    // Branches 1..K, each m dense blocks over widths c_s -> hidden... -> c_s.
    std::size_t branch_params = 0;
    std::size_t branch_flops = 0;
    for (std::size_t i = 0; i < topology.branch_depth; ++i) {
        std::size_t in = i == 0 ? c_s : hidden;
        std::size_t out = i + 1 == topology.branch_depth ? c_s : hidden;
        branch_params += in * out + out + 2 * out;
        branch_flops += detail::dense_block_flops(in, out, i + 1 != topology.branch_depth);
    }
    report.parameters += topology.stages * branch_params;
    report.flops_per_sample += topology.stages * branch_flops;
    return report;
}

inline OverheadReport overhead_walked(const EraModel& model) {
    OverheadReport report;
    for (const LinearLayer& proj : model.projections) {
        report.parameters += proj.parameter_count();
        report.flops_per_sample += detail::linear_flops(proj.in_dim(), proj.out_dim(), proj.has_bias);
    }
    for (const ResMBranch& branch : model.branches) {
        report.parameters += branch.parameter_count();
        for (const DenseBlock& block : branch.blocks) {
            report.flops_per_sample += detail::dense_block_flops(
                block.linear.in_dim(), block.linear.out_dim(), block.relu_after);
        }
    }
    return report;
}

} // namespace era
