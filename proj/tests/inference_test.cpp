#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "era/data.hpp"
#include "era/errors.hpp"
#include "era/inference.hpp"
#include "era/model.hpp"

namespace {

using era::EraModel;
using era::EraTopology;
using era::InferenceMode;
using era::InferenceSpec;
using era::Mode;
using era::ResidualState;
using era::Tape;
using era::Tensor;

EraTopology small_topology(std::size_t stages) {
    EraTopology t;
    t.student_widths = {6, 5, 3};
    t.teacher_widths = {6, 8, 4};
    t.classes = 3;
    t.stages = stages;
    t.branch_depth = 2;
    return t;
}

// A model whose branches genuinely contribute: init, then wake the
// zero-initialized final batch-norm scales so stages differ.
EraModel lively_model(const EraTopology& topology, std::uint64_t seed) {
    EraModel model(topology);
    model.init(seed);
    era::TeacherModel teacher(topology.teacher_widths, topology.classes);
    teacher.init(seed + 1);
    model.adopt_teacher(teacher);
    std::mt19937_64 rng(seed + 99);
    std::normal_distribution<double> normal(0.0, 0.7);
    for (era::ResMBranch& branch : model.branches) {
        for (double& g : branch.blocks.back().bn.gamma.values()) {
            g = 1.0 + normal(rng);
        }
    }
    model.set_mode(Mode::eval);
    return model;
}

Tensor probe_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor::randn({n, dim}, rng, 1.0);
}

TEST(Infer, RowsSumToOneInEveryMode) {
    EraModel model = lively_model(small_topology(2), 4);
    Tensor x = probe_batch(5, 6, 11);
    for (InferenceMode mode :
         {InferenceMode::student, InferenceMode::teacher_path, InferenceMode::merged}) {
        InferenceSpec spec;
        spec.mode = mode;
        Tensor probs = era::infer(model, x, spec);
        ASSERT_EQ(probs.shape()[0], 5u);
        ASSERT_EQ(probs.shape()[1], 3u);
        for (std::size_t i = 0; i < 5; ++i) {
            double row_sum = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                row_sum += probs.at(i, c);
            }
            EXPECT_NEAR(row_sum, 1.0, 1e-9) << to_string(mode) << " row " << i;
        }
    }
}

TEST(Infer, MergedWithMuOneMatchesStudentBitwise) {
    EraModel model = lively_model(small_topology(3), 4);
    Tensor x = probe_batch(4, 6, 12);
    InferenceSpec st;
    st.mode = InferenceMode::merged;
    st.mu = 1.0;
    InferenceSpec s;
    s.mode = InferenceMode::student;
    Tensor merged = era::infer(model, x, st);
    Tensor student = era::infer(model, x, s);
    EXPECT_EQ(merged.values(), student.values());
}

TEST(Infer, MergedWithMuZeroMatchesTeacherPathBitwise) {
    EraModel model = lively_model(small_topology(3), 4);
    Tensor x = probe_batch(4, 6, 13);
    InferenceSpec st;
    st.mode = InferenceMode::merged;
    st.mu = 0.0;
    InferenceSpec t;
    t.mode = InferenceMode::teacher_path;
    Tensor merged = era::infer(model, x, st);
    Tensor teacher = era::infer(model, x, t);
    EXPECT_EQ(merged.values(), teacher.values());
}

TEST(Infer, MergedIsAConvexCombinationEntrywise) {
    EraModel model = lively_model(small_topology(2), 4);
    Tensor x = probe_batch(6, 6, 14);
    InferenceSpec s;
    s.mode = InferenceMode::student;
    InferenceSpec t;
    t.mode = InferenceMode::teacher_path;
    InferenceSpec st;
    st.mode = InferenceMode::merged;
    st.mu = 0.3;
    Tensor ps = era::infer(model, x, s);
    Tensor pt = era::infer(model, x, t);
    Tensor blend = era::infer(model, x, st);
    for (std::size_t i = 0; i < blend.numel(); ++i) {
        double lo = std::min(ps.values()[i], pt.values()[i]);
        double hi = std::max(ps.values()[i], pt.values()[i]);
        EXPECT_GE(blend.values()[i], lo - 1e-15);
        EXPECT_LE(blend.values()[i], hi + 1e-15);
    }
}

TEST(Infer, FreshModelTeacherPathEqualsHeadOverProjection) {
    // Zero-initialized branches contribute nothing, so every truncation j
    // must reproduce sigma(h_t(P_0 f_s)) exactly.
    EraModel model(small_topology(3));
    model.init(21);
    model.set_mode(Mode::eval);
    Tensor x = probe_batch(4, 6, 15);

    Tape tape;
    Tensor f_s = model.student.forward(tape, x);
    Tensor projected = model.projections[0].forward(tape, f_s);
    Tensor logits = model.head_t.forward(tape, projected);
    Tensor expected = era::softmax_with_temperature(tape, logits, 1.0);

    for (std::size_t j = 0; j <= 3; ++j) {
        InferenceSpec spec;
        spec.mode = InferenceMode::teacher_path;
        spec.active_branches = j;
        Tensor probs = era::infer(model, x, spec);
        EXPECT_EQ(probs.values(), expected.values()) << "j = " << j;
    }
}

TEST(Infer, TruncationMatchesManualHeadOverEachApproximation) {
    EraModel model = lively_model(small_topology(3), 8);
    Tensor x = probe_batch(4, 6, 16);

    Tape tape;
    ResidualState state = era::cascade_forward(tape, model, x);
    for (std::size_t j = 0; j <= 3; ++j) {
        Tensor logits = model.head_t.forward(tape, state.fhat[j]);
        Tensor expected = era::softmax_with_temperature(tape, logits, 1.0);
        InferenceSpec spec;
        spec.mode = InferenceMode::teacher_path;
        spec.active_branches = j;
        Tensor probs = era::infer(model, x, spec);
        EXPECT_EQ(probs.values(), expected.values()) << "j = " << j;
    }
}

TEST(Infer, TruncationActuallyChangesTheOutputOnceBranchesAreLive) {
    EraModel model = lively_model(small_topology(2), 8);
    Tensor x = probe_batch(4, 6, 17);
    InferenceSpec none;
    none.mode = InferenceMode::teacher_path;
    none.active_branches = 0;
    InferenceSpec all;
    all.mode = InferenceMode::teacher_path;
    all.active_branches = 2;
    EXPECT_NE(era::infer(model, x, none).values(), era::infer(model, x, all).values());
}

TEST(Infer, BranchCountBeyondStagesIsRejected) {
    EraModel model = lively_model(small_topology(2), 4);
    Tensor x = probe_batch(2, 6, 18);
    InferenceSpec spec;
    spec.mode = InferenceMode::teacher_path;
    spec.active_branches = 3;
    EXPECT_THROW(era::infer(model, x, spec), era::ParameterError);
}

TEST(Infer, MuOutsideUnitIntervalIsRejected) {
    EraModel model = lively_model(small_topology(1), 4);
    Tensor x = probe_batch(2, 6, 19);
    InferenceSpec spec;
    spec.mu = 1.5;
    EXPECT_THROW(era::infer(model, x, spec), era::ParameterError);
    spec.mu = -0.1;
    EXPECT_THROW(era::infer(model, x, spec), era::ParameterError);
}

TEST(Infer, TrainModeModelIsRejected) {
    EraModel model = lively_model(small_topology(1), 4);
    model.set_mode(Mode::train);
    Tensor x = probe_batch(2, 6, 20);
    InferenceSpec spec;
    EXPECT_THROW(era::infer(model, x, spec), era::StateError);
}

TEST(ModeParsing, RoundTripsAndRejectsUnknown) {
    EXPECT_EQ(era::parse_inference_mode("s"), InferenceMode::student);
    EXPECT_EQ(era::parse_inference_mode("T"), InferenceMode::teacher_path);
    EXPECT_EQ(era::parse_inference_mode("st"), InferenceMode::merged);
    EXPECT_EQ(era::to_string(InferenceMode::merged), "st");
    EXPECT_THROW(era::parse_inference_mode("ts"), era::ConfigError);
}

TEST(EvaluateAccuracy, OracleModelScoresPerfectly) {
    // Identity encoder + identity head over one-hot-ish clusters: the argmax
    // of the features is the class, and the pipeline preserves it.
    EraTopology t;
    t.student_widths = {4, 4};
    t.teacher_widths = {4, 4};
    t.classes = 4;
    t.stages = 1;
    t.branch_depth = 1;
    EraModel model(t);
    model.init(3);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            model.student.blocks[0].linear.weight.at(i, j) = i == j ? 1.0 : 0.0;
            model.head_s.linear.weight.at(i, j) = i == j ? 1.0 : 0.0;
        }
        model.student.blocks[0].linear.bias.values()[i] = 0.0;
    }
    model.set_mode(Mode::eval);

    era::SyntheticSpec spec;
    spec.classes = 4;
    spec.input_dim = 4;
    spec.samples_per_class = 100;
    spec.cluster_scale = 0.5;
    spec.cluster_means.assign(16, 0.0);
    for (std::size_t c = 0; c < 4; ++c) {
        spec.cluster_means[c * 4 + c] = 20.0;
    }
    era::SyntheticData data = era::generate(spec, 6);

    InferenceSpec mode;
    mode.mode = InferenceMode::student;
    EXPECT_DOUBLE_EQ(era::evaluate_accuracy(model, data.test, mode), 1.0);
}

TEST(EvaluateAccuracy, UniformLabelsScoreNearChance) {
    // label_noise = 1 redraws every label uniformly, so any fixed predictor
    // sits at 1/M up to binomial noise (sd ~ 0.014 at n = 1000).
    era::SyntheticSpec spec;
    spec.classes = 4;
    spec.input_dim = 6;
    spec.samples_per_class = 250;
    spec.label_noise = 1.0;
    era::SyntheticData data = era::generate(spec, 7);

    EraTopology t;
    t.student_widths = {6, 5, 4};
    t.teacher_widths = {6, 5, 4};
    t.classes = 4;
    t.stages = 1;
    t.branch_depth = 1;
    EraModel model(t);
    model.init(5);
    model.set_mode(Mode::eval);

    InferenceSpec mode;
    mode.mode = InferenceMode::student;
    double train_acc = era::evaluate_accuracy(model, data.train, mode);
    EXPECT_NEAR(train_acc, 0.25, 0.05);
}

TEST(EvaluateAccuracy, MismatchedDatasetIsRejected) {
    EraModel model = lively_model(small_topology(1), 4);
    era::SyntheticSpec spec;
    spec.classes = 3;
    spec.input_dim = 7;  // student expects 6
    spec.samples_per_class = 5;
    era::SyntheticData data = era::generate(spec, 8);
    InferenceSpec mode;
    EXPECT_THROW(era::evaluate_accuracy(model, data.train, mode), era::TopologyError);
}

TEST(EvaluateAccuracy, AllModesHelperAgreesWithSingleModeCalls) {
    EraModel model = lively_model(small_topology(2), 9);
    era::SyntheticSpec spec;
    spec.classes = 3;
    spec.input_dim = 6;
    spec.samples_per_class = 40;
    era::SyntheticData data = era::generate(spec, 10);

    era::ModeAccuracies all = era::evaluate_all_modes(model, data.test, 0.5);
    InferenceSpec s;
    s.mode = InferenceMode::student;
    InferenceSpec t;
    t.mode = InferenceMode::teacher_path;
    InferenceSpec st;
    st.mode = InferenceMode::merged;
    st.mu = 0.5;
    EXPECT_DOUBLE_EQ(all.acc_s, era::evaluate_accuracy(model, data.test, s));
    EXPECT_DOUBLE_EQ(all.acc_t, era::evaluate_accuracy(model, data.test, t));
    EXPECT_DOUBLE_EQ(all.acc_st, era::evaluate_accuracy(model, data.test, st));
}

TEST(Overhead, AnalyticMatchesWalkedAcrossTopologies) {
    for (std::size_t stages : {std::size_t{0}, std::size_t{1}, std::size_t{3}}) {
        for (std::size_t depth : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
            for (std::size_t hidden : {std::size_t{0}, std::size_t{7}}) {
                EraTopology t = small_topology(stages);
                t.branch_depth = depth;
                t.branch_hidden = hidden;
                EraModel model(t);
                model.init(1);
                EXPECT_EQ(era::overhead_analytic(t), era::overhead_walked(model))
                    << "stages=" << stages << " m=" << depth << " hidden=" << hidden;
            }
        }
    }
}

TEST(Overhead, HandTalliedTinyCase) {
    // C_s = 3, C_t = 5, K = 1, m = 2, hidden defaults to io width.
    // Projections: 2 * (3*5 + 5) = 40 params, 2 * (2*3*5 + 5) = 70 flops.
    // Branch: two 3->3 blocks: params 2 * (9 + 3 + 6) = 36;
    // flops (21 + 12 + 3) + (21 + 12) = 69.
    EraTopology t;
    t.student_widths = {4, 3};
    t.teacher_widths = {4, 5};
    t.classes = 2;
    t.stages = 1;
    t.branch_depth = 2;
    era::OverheadReport report = era::overhead_analytic(t);
    EXPECT_EQ(report.parameters, 76u);
    EXPECT_EQ(report.flops_per_sample, 139u);
    EraModel model(t);
    EXPECT_EQ(era::overhead_walked(model), report);
    EXPECT_EQ(model.overhead_parameter_count(), report.parameters);
}

} // namespace
