#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "era/errors.hpp"
#include "era/layers.hpp"
#include "era/tensor.hpp"

namespace era {

// ============================================================================
// Topology
// ============================================================================

/// How residual branches are fed: each from the previous branch's raw output,
/// or every branch directly from the student features.
enum class BranchFeed { cascaded, parallel };

inline const char* to_string(BranchFeed feed) {
    return feed == BranchFeed::cascaded ? "cascaded" : "parallel";
}

inline BranchFeed parse_branch_feed(const std::string& name) {
    if (name == "cascaded") return BranchFeed::cascaded;
    if (name == "parallel") return BranchFeed::parallel;
    throw ConfigError("unknown branch feed '" + name + "'");
}

/// Everything needed to rebuild a model with the right shapes.
struct EraTopology {
    std::vector<std::size_t> student_widths;  // input, hidden..., feature dim
    std::vector<std::size_t> teacher_widths;
    std::size_t classes = 0;
    std::size_t stages = 0;        // K: number of residual branches
    std::size_t branch_depth = 1;  // m: blocks per branch
    std::size_t branch_hidden = 0; // 0 means "same as the branch width"
    BranchFeed branch_feed = BranchFeed::cascaded;

    std::size_t input_dim() const { return student_widths.front(); }
    std::size_t student_dim() const { return student_widths.back(); }
    std::size_t teacher_dim() const { return teacher_widths.back(); }

    void validate() const {
        if (student_widths.size() < 2 || teacher_widths.size() < 2) {
            throw SpecError("EraTopology: encoders need at least input and output widths");
        }
        for (std::size_t w : student_widths) {
            if (w == 0) throw SpecError("EraTopology: zero student width");
        }
        for (std::size_t w : teacher_widths) {
            if (w == 0) throw SpecError("EraTopology: zero teacher width");
        }
        if (student_widths.front() != teacher_widths.front()) {
            throw SpecError("EraTopology: student and teacher input widths differ");
        }
        if (classes < 2) {
            throw SpecError("EraTopology: need at least two classes");
        }
        if (branch_depth == 0) {
            throw SpecError("EraTopology: branch depth m must be at least 1");
        }
    }

    bool operator==(const EraTopology&) const = default;
};

inline std::string widths_to_string(const std::vector<std::size_t>& widths) {
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(widths[i]);
    }
    return s;
}

inline std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> widths;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            throw ConfigError("empty entry in width list '" + text + "'");
        }
        std::size_t pos = 0;
        unsigned long w = 0;
        try {
            w = std::stoul(item, &pos);
        } catch (const std::exception&) {
            throw ConfigError("bad width '" + item + "' in list '" + text + "'");
        }
        if (pos != item.size() || w == 0) {
            throw ConfigError("bad width '" + item + "' in list '" + text + "'");
        }
        widths.push_back(w);
    }
    if (widths.empty()) {
        throw ConfigError("empty width list");
    }
    return widths;
}

inline std::string to_string(const EraTopology& t) {
    std::string s;
    s += "student=" + widths_to_string(t.student_widths);
    s += " teacher=" + widths_to_string(t.teacher_widths);
    s += " classes=" + std::to_string(t.classes);
    s += " stages=" + std::to_string(t.stages);
    s += " branch_depth=" + std::to_string(t.branch_depth);
    s += " branch_hidden=" + std::to_string(t.branch_hidden);
    s += " branch_feed=" + std::string(to_string(t.branch_feed));
    return s;
}

inline EraTopology parse_topology(const std::string& line) {
    EraTopology t;
    std::stringstream ss(line);
    std::string field;
    bool saw_student = false, saw_teacher = false, saw_classes = false;
    while (ss >> field) {
        std::size_t eq = field.find('=');
        if (eq == std::string::npos) {
            throw IoError("malformed topology field '" + field + "'");
        }
        std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "student") {
            t.student_widths = parse_widths(value);
            saw_student = true;
        } else if (key == "teacher") {
            t.teacher_widths = parse_widths(value);
            saw_teacher = true;
        } else if (key == "classes") {
            t.classes = std::stoul(value);
            saw_classes = true;
        } else if (key == "stages") {
            t.stages = std::stoul(value);
        } else if (key == "branch_depth") {
            t.branch_depth = std::stoul(value);
        } else if (key == "branch_hidden") {
            t.branch_hidden = std::stoul(value);
        } else if (key == "branch_feed") {
            t.branch_feed = parse_branch_feed(value);
        } else {
            throw IoError("unknown topology field '" + key + "'");
        }
    }
    if (!saw_student || !saw_teacher || !saw_classes) {
        throw IoError("topology line is missing required fields");
    }
    t.validate();
    return t;
}

// ============================================================================
// Teacher
// ============================================================================

/// Plainly trained classifier whose features and logits the student mimics.
struct TeacherModel {
    MlpEncoder encoder;
    ClassifierHead head;

    TeacherModel() = default;
    TeacherModel(std::vector<std::size_t> widths, std::size_t classes)
        : encoder(std::move(widths)), head(encoder.output_dim(), classes) {}

    void init(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        init_parameters(encoder, rng);
        init_parameters(head, rng);
    }

    void set_mode(Mode m) { encoder.set_mode(m); }

    void set_trainable(bool flag) {
        encoder.set_trainable(flag);
        head.set_trainable(flag);
    }

    template <class F>
    void visit_params(F&& fn) {
        encoder.visit_params("encoder", fn);
        head.visit_params("head.linear", fn);
    }

    template <class F>
    void visit_buffers(F&& fn) {
        encoder.visit_buffers("encoder", fn);
    }
};

// ============================================================================
// ERA model
// ============================================================================

/**
 * Distillation model: a student encoder and head, a frozen teacher copy, and
 * the expansion machinery that rebuilds teacher features step by step. The
 * projection P_0 maps student features into teacher feature space; each
 * residual branch k produces a correction that P_k maps into the same space.
 */
struct EraModel {
    EraTopology topology;
    MlpEncoder student;
    ClassifierHead head_s;
    MlpEncoder teacher;
    ClassifierHead head_t;
    std::vector<LinearLayer> projections;  // K+1 maps into teacher feature space
    std::vector<ResMBranch> branches;      // K residual branches
    bool detach_targets = true;

    EraModel() = default;

    explicit EraModel(EraTopology topo) : topology(std::move(topo)) {
        topology.validate();
        student = MlpEncoder(topology.student_widths);
        head_s = ClassifierHead(topology.student_dim(), topology.classes);
        teacher = MlpEncoder(topology.teacher_widths);
        head_t = ClassifierHead(topology.teacher_dim(), topology.classes);
        projections.reserve(topology.stages + 1);
        for (std::size_t k = 0; k <= topology.stages; ++k) {
            projections.emplace_back(topology.student_dim(), topology.teacher_dim(),
                                     /*with_bias=*/true);
        }
        branches.reserve(topology.stages);
        for (std::size_t k = 0; k < topology.stages; ++k) {
            branches.emplace_back(topology.student_dim(), topology.branch_depth,
                                  topology.branch_hidden);
        }
        freeze_teacher();
    }

    std::size_t stages() const { return topology.stages; }

    /// Initializes every trainable part (not the teacher; that comes from a
    /// trained TeacherModel via adopt_teacher).
    void init(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        init_parameters(student, rng);
        init_parameters(head_s, rng);
        for (LinearLayer& proj : projections) {
            init_parameters(proj, rng);
        }
        for (ResMBranch& branch : branches) {
            init_parameters(branch, rng);
        }
    }

    /// Copies teacher weights in and freezes them. The teacher stays in eval
    /// mode from here on.
    void adopt_teacher(TeacherModel& source) {
        if (source.encoder.widths != topology.teacher_widths ||
            source.head.classes() != topology.classes) {
            throw TopologyError("adopt_teacher: teacher shape " +
                                widths_to_string(source.encoder.widths) + "/" +
                                std::to_string(source.head.classes()) + " classes does not match " +
                                widths_to_string(topology.teacher_widths) + "/" +
                                std::to_string(topology.classes));
        }
        std::vector<Tensor*> src, dst;
        source.visit_params([&](const std::string&, Tensor& t) { src.push_back(&t); });
        source.visit_buffers([&](const std::string&, Tensor& t) { src.push_back(&t); });
        teacher.visit_params("t", [&](const std::string&, Tensor& t) { dst.push_back(&t); });
        head_t.visit_params("t", [&](const std::string&, Tensor& t) { dst.push_back(&t); });
        teacher.visit_buffers("t", [&](const std::string&, Tensor& t) { dst.push_back(&t); });
        if (src.size() != dst.size()) {
            throw ContractError("adopt_teacher: parameter walks disagree");
        }
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i]->values() = src[i]->values();
        }
        freeze_teacher();
    }

    void freeze_teacher() {
        teacher.set_trainable(false);
        head_t.set_trainable(false);
        teacher.set_mode(Mode::eval);
    }

    /// Marks the teacher head trainable (its ablation variant). The teacher
    /// encoder always stays frozen.
    void set_head_t_trainable(bool flag) { head_t.set_trainable(flag); }

    /// Train/eval switch for the parts that own batch statistics. The
    /// teacher is untouched and stays in eval mode.
    void set_mode(Mode m) {
        student.set_mode(m);
        for (ResMBranch& branch : branches) {
            branch.set_mode(m);
        }
    }

    /// Walks trainable sections in a fixed order. The teacher is included so
    /// checkpoints are self-contained; its tensors simply do not require
    /// gradients while frozen.
    template <class F>
    void visit_params(F&& fn) {
        student.visit_params("student", fn);
        head_s.visit_params("head_s.linear", fn);
        teacher.visit_params("teacher", fn);
        head_t.visit_params("head_t.linear", fn);
        for (std::size_t k = 0; k < projections.size(); ++k) {
            projections[k].visit_params("proj" + std::to_string(k), fn);
        }
        for (std::size_t k = 0; k < branches.size(); ++k) {
            branches[k].visit_params("branch" + std::to_string(k + 1), fn);
        }
    }

    template <class F>
    void visit_buffers(F&& fn) {
        student.visit_buffers("student", fn);
        teacher.visit_buffers("teacher", fn);
        for (std::size_t k = 0; k < branches.size(); ++k) {
            branches[k].visit_buffers("branch" + std::to_string(k + 1), fn);
        }
    }

    /// Parameters added on top of the plain student: branches and projections.
    std::size_t overhead_parameter_count() const {
        std::size_t total = 0;
        for (const LinearLayer& proj : projections) {
            total += proj.parameter_count();
        }
        for (const ResMBranch& branch : branches) {
            total += branch.parameter_count();
        }
        return total;
    }

    /// Deep copy: same topology and flags, independent storage.
    EraModel clone() const {
        EraModel copy = *this;  // shares tensor payloads
        copy.visit_params([](const std::string&, Tensor& t) { t = t.clone(); });
        copy.visit_buffers([](const std::string&, Tensor& t) { t = t.clone(); });
        return copy;
    }
};

// ============================================================================
// Cascade
// ============================================================================

/// Per-batch products of the expansion pass.
struct ResidualState {
    Tensor f_s;                         // student features
    Tensor f_t;                         // teacher features (constant)
    std::vector<Tensor> branch_outputs; // raw branch outputs, stages 1..K
    std::vector<Tensor> projected;      // P_k applied, stages 0..K
    std::vector<Tensor> fhat;           // accumulated approximations, stages 0..K
    std::vector<Tensor> targets;        // stage residual targets, stages 0..K
    double approx_error = 0.0;          // mean over batch of ||f_t - fhat_K||
};

/**
 * Stage residual targets: target 0 is the full teacher feature, target k is
 * what is still missing after stage k-1. With detach (the default) each
 * target is a constant; otherwise gradients may flow into earlier stages
 * through the accumulated approximation.
 */
inline std::vector<Tensor> residual_targets(Tape& tape, const Tensor& f_t,
                                            const std::vector<Tensor>& fhat, bool detach) {
    std::vector<Tensor> targets;
    targets.reserve(fhat.size() + 1);
    targets.push_back(f_t.detach());
    for (std::size_t k = 1; k <= fhat.size(); ++k) {
        if (detach) {
            targets.push_back(sub(tape, f_t.detach(), fhat[k - 1].detach()));
        } else {
            targets.push_back(sub(tape, f_t.detach(), fhat[k - 1]));
        }
    }
    return targets;
}

/**
 * Runs the student, the frozen teacher, and all residual branches on one
 * input batch.
 *
 * Branch k consumes a detached copy of its input (the previous branch's raw
 * output under cascaded feed, the student features under parallel feed), so
 * each stage's feature loss trains only that stage. The accumulated
 * approximation, on the other hand, is fully connected: gradients reaching
 * fhat_k flow into every projection up to k and into the student through
 * P_0.
 */
inline ResidualState cascade_forward(Tape& tape, EraModel& model, const Tensor& x) {
    ResidualState state;
    state.f_s = model.student.forward(tape, x);
    state.f_t = model.teacher.forward(tape, x);

    state.projected.push_back(model.projections[0].forward(tape, state.f_s));
    state.fhat.push_back(state.projected[0]);

    Tensor carry = state.f_s;  // raw output of the previous stage
    for (std::size_t k = 1; k <= model.stages(); ++k) {
        Tensor input = model.topology.branch_feed == BranchFeed::cascaded ? carry : state.f_s;
        Tensor branch_out = model.branches[k - 1].forward(tape, input.detach());
        state.branch_outputs.push_back(branch_out);
        state.projected.push_back(model.projections[k].forward(tape, branch_out));
        state.fhat.push_back(add(tape, state.fhat[k - 1], state.projected[k]));
        carry = branch_out;
    }

    // Target k depends on fhat up to stage k-1; the final accumulation has
    // no target of its own.
    std::vector<Tensor> partial(state.fhat.begin(), state.fhat.end() - 1);
    state.targets = residual_targets(tape, state.f_t, partial, model.detach_targets);

    std::size_t n = state.f_t.shape()[0], c = state.f_t.shape()[1];
    const Tensor& last = state.fhat.back();
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = state.f_t.values()[i * c + j] - last.values()[i * c + j];
            row += d * d;
        }
        err += std::sqrt(row);
    }
    state.approx_error = err / static_cast<double>(n);
    return state;
}

} // namespace era
