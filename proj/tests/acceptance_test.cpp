// Release gate for the library. Each test checks one acceptance criterion
// and prints a single [PASS]/[FAIL] line, so the suite output doubles as the
// acceptance report. Structural criteria are exact (bit-level or tight
// tolerance); the behavioral criteria rerun the reference synthetic task and
// check orderings, not absolute numbers.

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "era/checkpoint.hpp"
#include "era/config.hpp"
#include "era/data.hpp"
#include "era/gradcheck_suite.hpp"
#include "era/inference.hpp"
#include "era/losses.hpp"
#include "era/model.hpp"
#include "era/trainer.hpp"

namespace {

// Prints the criterion verdict when the test body finishes, including early
// exits from fatal assertions.
struct CriterionReport {
    std::string label;
    std::string note;

    explicit CriterionReport(std::string l) : label(std::move(l)) {}
    ~CriterionReport() {
        bool ok = !::testing::Test::HasFailure();
        std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", label.c_str(),
                    note.empty() ? "" : ": ", note.c_str());
        std::fflush(stdout);
    }
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    EXPECT_EQ(a.size(), b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

void perturb_params(era::EraModel& model, std::uint64_t seed, double sigma = 0.4) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    model.visit_params([&](const std::string&, era::Tensor& t) {
        for (double& v : t.values()) {
            v += noise(rng);
        }
    });
}

era::Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                        std::size_t classes) {
    era::Batch batch;
    batch.x = era::Tensor::randn({n, dim}, rng, 1.0);
    std::uniform_int_distribution<std::size_t> label(0, classes - 1);
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        batch.labels[i] = label(rng);
    }
    return batch;
}

double median5(std::array<double, 5> v) {
    std::sort(v.begin(), v.end());
    return v[2];
}

// ---------------------------------------------------------------------------
// Shared fixtures. The reference task is the library's default configuration;
// training its teacher once keeps the two behavioral criteria consistent with
// each other and with the experiment binary, which resolves the same defaults.
// ---------------------------------------------------------------------------

struct ReferenceTask {
    era::RunConfig cfg;
    era::SyntheticData data;
    era::TeacherTrainResult teacher;
};

ReferenceTask& reference_task() {
    static ReferenceTask task = [] {
        ReferenceTask t;
        t.data = era::generate(era::make_synthetic_spec(t.cfg), t.cfg.data_seed);
        t.teacher = era::train_teacher(t.cfg.model_teacher_widths, t.data.train.classes,
                                       t.data.train, t.data.test, era::make_train_config(t.cfg));
        return t;
    }();
    return task;
}

// Fresh student distilled against the shared reference teacher. Returns the
// per-epoch history, or nothing when the run NaN-aborts.
std::optional<std::vector<era::EpochMetrics>> reference_distill(const std::string& schedule,
                                                                std::size_t seed) {
    ReferenceTask& ref = reference_task();
    era::RunConfig cfg = ref.cfg;
    cfg.loss_schedule = schedule;
    cfg.train_seed = seed;
    era::TrainConfig tc = era::make_train_config(cfg);
    era::EraModel model(era::make_topology(cfg));
    model.init(tc.seed);
    model.adopt_teacher(ref.teacher.model);
    era::SgdMomentum opt(tc.momentum, tc.weight_decay);
    try {
        return era::distill(model, opt, ref.data.train, ref.data.test, tc);
    } catch (const era::NumericError&) {
        return std::nullopt;
    }
}

// Small throwaway task for the structural criteria that need real training
// but no particular accuracy.
struct TinyTask {
    era::SyntheticData data;
    era::TeacherTrainResult teacher;
    era::EraTopology topo;
    era::TrainConfig tc;
};

TinyTask& tiny_task() {
    static TinyTask t = [] {
        TinyTask task;
        era::SyntheticSpec spec;
        spec.classes = 3;
        spec.input_dim = 8;
        spec.samples_per_class = 40;
        spec.mean_scale = 2.0;
        task.data = era::generate(spec, 7);

        task.topo.student_widths = {8, 6, 4};
        task.topo.teacher_widths = {8, 10, 5};
        task.topo.classes = 3;
        task.topo.stages = 2;
        task.topo.branch_depth = 2;

        task.tc.epochs = 6;
        task.tc.batch_size = 16;
        task.tc.learning_rate = 0.01;
        task.tc.seed = 1;
        task.teacher = era::train_teacher(task.topo.teacher_widths, 3, task.data.train,
                                          task.data.test, task.tc);
        return task;
    }();
    return t;
}

} // namespace

// ---------------------------------------------------------------------------
// 1. Gradient suite: every loss and block passes finite-difference checks.
// ---------------------------------------------------------------------------

TEST(Acceptance, GradientSuite) {
    CriterionReport report("gradient suite (100 seeds, eps 1e-5, tol 1e-4, under 60 s)");
    auto start = std::chrono::steady_clock::now();
    std::vector<era::CheckOutcome> outcomes = era::run_gradcheck_suite(100, 1e-5, 1e-4);
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    ASSERT_GE(outcomes.size(), 20u);
    double worst = 0.0;
    for (const era::CheckOutcome& o : outcomes) {
        EXPECT_TRUE(o.passed) << o.name << " rel err " << o.max_rel_error
                              << " at seed " << o.worst_seed;
        worst = std::max(worst, o.max_rel_error);
    }
    EXPECT_LE(worst, 1e-4);
    EXPECT_LT(elapsed, 60.0);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu checks, worst rel err %.3g, %.2f s",
                  outcomes.size(), worst, elapsed);
    report.note = buf;
}

// ---------------------------------------------------------------------------
// 2. Telescoping oracle: direct stage targets match the recursive form, and
//    the final approximation is exactly the left-fold sum of projections.
// ---------------------------------------------------------------------------

TEST(Acceptance, TelescopingOracle) {
    CriterionReport report("telescoping oracle (1000 instantiations, inf-norm 1e-10)");
    double worst = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
        era::EraTopology topo;
        std::size_t in = 4 + i % 3;
        topo.student_widths = {in, 6, 3 + i % 4};
        topo.teacher_widths = {in, 7, 4 + i % 3};
        topo.classes = 3;
        topo.stages = i % 5;
        topo.branch_depth = 1 + (i / 5) % 3;
        topo.branch_hidden = (i % 3 == 0) ? 5 : 0;
        topo.branch_feed = (i % 2 == 0) ? era::BranchFeed::cascaded : era::BranchFeed::parallel;

        era::EraModel model(topo);
        model.init(i + 1);
        era::TeacherModel teacher(topo.teacher_widths, topo.classes);
        teacher.init(7 * i + 3);
        model.adopt_teacher(teacher);
        model.detach_targets = (i % 3 != 0);
        perturb_params(model, 13 * i + 5);
        model.set_mode(era::Mode::eval);

        std::mt19937_64 rng(i + 11);
        era::Tensor x = era::Tensor::randn({2 + i % 3, in}, rng, 1.0);
        era::Tape tape;
        era::ResidualState state = era::cascade_forward(tape, model, x);

        ASSERT_EQ(state.targets.size(), topo.stages + 1);
        std::vector<double> remainder = state.f_t.values();
        for (std::size_t k = 0; k <= topo.stages; ++k) {
            worst = std::max(worst, max_abs_diff(state.targets[k].values(), remainder));
            if (k < topo.stages) {
                const std::vector<double>& p = state.projected[k].values();
                for (std::size_t j = 0; j < remainder.size(); ++j) {
                    remainder[j] -= p[j];
                }
            }
        }

        std::vector<double> folded = state.projected[0].values();
        for (std::size_t k = 1; k <= topo.stages; ++k) {
            const std::vector<double>& p = state.projected[k].values();
            for (std::size_t j = 0; j < folded.size(); ++j) {
                folded[j] += p[j];
            }
        }
        EXPECT_EQ(folded, state.fhat.back().values()) << "instantiation " << i;
        if (worst > 1e-10) {
            ADD_FAILURE() << "target mismatch " << worst << " at instantiation " << i;
            break;
        }
    }
    EXPECT_LE(worst, 1e-10);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst target deviation %.3g", worst);
    report.note = buf;
}

// ---------------------------------------------------------------------------
// 3. Degeneracy oracle: with zero stages the objective collapses to the plain
//    logit + feature distillation sum, bit for bit.
// ---------------------------------------------------------------------------

TEST(Acceptance, DegeneracyOracle) {
    CriterionReport report("degeneracy oracle (K=0 equals CE + KL + MSE on 100 batches)");
    for (std::size_t i = 0; i < 100; ++i) {
        era::EraTopology topo;
        topo.student_widths = {6, 5};
        topo.teacher_widths = {6, 8};
        topo.classes = 4;
        topo.stages = 0;

        era::EraModel model(topo);
        model.init(i + 1);
        era::TeacherModel teacher(topo.teacher_widths, topo.classes);
        teacher.init(3 * i + 2);
        model.adopt_teacher(teacher);
        model.set_mode(era::Mode::eval);

        era::LossWeights w;
        w.alpha = (i % 2 == 0) ? 1.0 : 0.7;
        w.beta = (i % 3 == 0) ? 2.0 : 1.3;
        w.gamma = (i % 4 == 0) ? 1.0 : 0.6;
        w.temperature = (i % 2 == 0) ? 4.0 : 2.5;

        std::mt19937_64 rng(17 * i + 1);
        era::Batch batch = random_batch(rng, 5, 6, 4);

        era::Tape bundled_tape;
        era::LossBundle bundle = era::build_losses(bundled_tape, model, batch, w, 0.0);

        era::Tape tape;
        era::Tensor f_s = model.student.forward(tape, batch.x);
        era::Tensor f_t = model.teacher.forward(tape, batch.x);
        era::Tensor projected = model.projections[0].forward(tape, f_s);
        era::Tensor logits_s = model.head_s.forward(tape, f_s);
        era::Tensor logits_t = model.head_t.forward(tape, f_t);
        era::Tensor ce =
            era::cross_entropy(tape, era::softmax_with_temperature(tape, logits_s, 1.0),
                               batch.labels);
        era::Tensor kl = era::kl_distillation(tape, logits_t, logits_s, w.temperature);
        era::Tensor kd = era::add(tape, era::scale(tape, ce, w.alpha), era::scale(tape, kl, w.beta));
        era::Tensor mse = era::feature_mse(tape, f_t.detach(), projected);
        double s0 = era::schedule_s(0, w.schedule, 0.0);
        era::Tensor composed = era::add(tape, kd, era::scale(tape, mse, s0 * w.gamma));

        ASSERT_TRUE(bundle.cls.empty());
        ASSERT_EQ(bundle.fd.size(), 1u);
        EXPECT_EQ(bundle.total.item(), composed.item()) << "batch " << i;
    }
}

// ---------------------------------------------------------------------------
// 4. Zero-init contract: untrained branches contribute exactly nothing.
// ---------------------------------------------------------------------------

TEST(Acceptance, ZeroInitContract) {
    CriterionReport report("zero-init contract (fhat_k == P0 f_s, T-mode j=0 exact)");
    era::EraTopology topo;
    topo.student_widths = {8, 7, 5};
    topo.teacher_widths = {8, 10, 6};
    topo.classes = 4;
    topo.stages = 3;
    topo.branch_depth = 2;

    era::EraModel model(topo);
    model.init(42);
    era::TeacherModel teacher(topo.teacher_widths, topo.classes);
    teacher.init(43);
    model.adopt_teacher(teacher);
    model.set_mode(era::Mode::eval);

    std::mt19937_64 rng(44);
    era::Tensor x = era::Tensor::randn({6, 8}, rng, 1.0);
    {
        era::Tape tape;
        era::ResidualState state = era::cascade_forward(tape, model, x);
        for (std::size_t k = 0; k <= topo.stages; ++k) {
            EXPECT_EQ(state.fhat[k].values(), state.projected[0].values()) << "stage " << k;
        }
    }

    era::InferenceSpec spec;
    spec.mode = era::InferenceMode::teacher_path;
    spec.active_branches = 0;
    era::Tensor via_infer = era::infer(model, x, spec);
    {
        era::Tape tape;
        era::Tensor f_s = model.student.forward(tape, x);
        era::Tensor projected = model.projections[0].forward(tape, f_s);
        era::Tensor logits = model.head_t.forward(tape, projected);
        era::Tensor probs = era::softmax_with_temperature(tape, logits, 1.0);
        EXPECT_EQ(via_infer.values(), probs.values());
    }
}

// ---------------------------------------------------------------------------
// 5. Mode identities: the blend at its endpoints reproduces the pure modes.
// ---------------------------------------------------------------------------

TEST(Acceptance, ModeIdentities) {
    CriterionReport report("mode identities (ST(mu=1) == S, ST(mu=0) == T, tol 1e-12)");
    era::EraTopology topo;
    topo.student_widths = {8, 7, 5};
    topo.teacher_widths = {8, 10, 6};
    topo.classes = 4;
    topo.stages = 3;
    topo.branch_depth = 2;

    era::EraModel model(topo);
    model.init(21);
    era::TeacherModel teacher(topo.teacher_widths, topo.classes);
    teacher.init(22);
    model.adopt_teacher(teacher);
    perturb_params(model, 23);
    model.set_mode(era::Mode::eval);

    double worst = 0.0;
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 10; ++trial) {
        era::Tensor x = era::Tensor::randn({5, 8}, rng, 1.5);
        era::InferenceSpec spec;

        spec.mode = era::InferenceMode::student;
        era::Tensor p_s = era::infer(model, x, spec);
        spec.mode = era::InferenceMode::teacher_path;
        era::Tensor p_t = era::infer(model, x, spec);

        spec.mode = era::InferenceMode::merged;
        spec.mu = 1.0;
        worst = std::max(worst, max_abs_diff(era::infer(model, x, spec).values(), p_s.values()));
        spec.mu = 0.0;
        worst = std::max(worst, max_abs_diff(era::infer(model, x, spec).values(), p_t.values()));
    }
    EXPECT_LE(worst, 1e-12);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "worst deviation %.3g", worst);
    report.note = buf;
}

// ---------------------------------------------------------------------------
// 6. Freeze contract: a full distillation run never touches the teacher.
// ---------------------------------------------------------------------------

TEST(Acceptance, FreezeContract) {
    CriterionReport report("freeze contract (teacher bit-identical across a full run)");
    TinyTask& tiny = tiny_task();
    era::EraModel model(tiny.topo);
    model.init(tiny.tc.seed);
    model.adopt_teacher(tiny.teacher.model);

    auto collect = [](era::EraModel& m) {
        std::vector<std::vector<double>> out;
        m.teacher.visit_params("t", [&](const std::string&, era::Tensor& t) {
            out.push_back(t.values());
        });
        m.head_t.visit_params("t", [&](const std::string&, era::Tensor& t) {
            out.push_back(t.values());
        });
        m.teacher.visit_buffers("t", [&](const std::string&, era::Tensor& t) {
            out.push_back(t.values());
        });
        return out;
    };
    std::vector<std::vector<double>> before = collect(model);
    std::vector<double> student_before;
    model.student.visit_params("s", [&](const std::string&, era::Tensor& t) {
        if (student_before.empty()) student_before = t.values();
    });

    era::SgdMomentum opt(tiny.tc.momentum, tiny.tc.weight_decay);
    era::distill(model, opt, tiny.data.train, tiny.data.test, tiny.tc);

    EXPECT_EQ(collect(model), before);
    std::vector<double> student_after;
    model.student.visit_params("s", [&](const std::string&, era::Tensor& t) {
        if (student_after.empty()) student_after = t.values();
    });
    EXPECT_NE(student_after, student_before) << "training should have moved the student";
}

// ---------------------------------------------------------------------------
// 7. Reference-task efficacy: distillation beats plain cross-entropy at the
//    median, the reconstructed path scores at least the student, and the
//    residual gap shrinks.
// ---------------------------------------------------------------------------

TEST(Acceptance, DeskScaleEfficacy) {
    CriterionReport report("reference-task efficacy (5 seeds, under 5 min)");
    auto start = std::chrono::steady_clock::now();
    ReferenceTask& ref = reference_task();

    std::array<double, 5> ce_acc{};
    std::array<double, 5> era_s{};
    std::array<double, 5> era_t{};
    std::size_t t_wins = 0;
    std::size_t shrunk = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        std::size_t seed = i + 1;
        era::TrainConfig ce_tc = era::make_train_config(ref.cfg);
        ce_tc.seed = seed;
        ce_acc[i] = era::train_teacher(ref.cfg.model_student_widths, ref.data.train.classes,
                                       ref.data.train, ref.data.test, ce_tc)
                        .history.back()
                        .accuracy;

        auto history = reference_distill(ref.cfg.loss_schedule, seed);
        ASSERT_TRUE(history.has_value()) << "reference run diverged at seed " << seed;
        era_s[i] = history->back().acc_s;
        era_t[i] = history->back().acc_t;
        t_wins += era_t[i] >= era_s[i] ? 1 : 0;
        shrunk += history->back().approx_error < history->front().approx_error ? 1 : 0;
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    EXPECT_GE(median5(era_s), median5(ce_acc));
    EXPECT_GE(t_wins, 4u);
    EXPECT_EQ(shrunk, 5u);
    EXPECT_LT(elapsed, 300.0);
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "median S %.4f vs CE %.4f, T>=S %zu/5, gap shrank %zu/5, %.0f s",
                  median5(era_s), median5(ce_acc), t_wins, shrunk, elapsed);
    report.note = buf;
}

// ---------------------------------------------------------------------------
// 8. Schedule ablation: decaying stage weights dominate, growing ones abort
//    or trail, and starving the branches costs accuracy.
// ---------------------------------------------------------------------------

TEST(Acceptance, ScheduleAblation) {
    CriterionReport report("schedule ablation ordering (5 seeds per setting)");
    struct Cell {
        bool aborted = false;
        double acc_t = 0.0;
    };
    std::map<std::string, std::array<Cell, 5>> grid;
    for (const char* schedule :
         {"exp_decay", "constant", "increasing_linear", "increasing_exp", "biased_first"}) {
        for (std::size_t i = 0; i < 5; ++i) {
            auto history = reference_distill(schedule, i + 1);
            Cell& cell = grid[schedule][i];
            if (history.has_value()) {
                cell.acc_t = history->back().acc_t;
            } else {
                cell.aborted = true;
            }
        }
    }

    const std::array<Cell, 5>& exp_decay = grid["exp_decay"];
    for (const Cell& cell : exp_decay) {
        ASSERT_FALSE(cell.aborted) << "the default schedule must not diverge";
    }

    std::size_t exp_over_const = 0;
    std::size_t increasing_behind = 0;
    std::size_t biased_behind = 0;
    std::size_t aborted = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        exp_over_const += exp_decay[i].acc_t >= grid["constant"][i].acc_t ? 1 : 0;
        for (const char* name : {"increasing_linear", "increasing_exp"}) {
            const Cell& cell = grid[name][i];
            aborted += cell.aborted ? 1 : 0;
            increasing_behind += (cell.aborted || cell.acc_t < exp_decay[i].acc_t) ? 1 : 0;
        }
        const Cell& biased = grid["biased_first"][i];
        biased_behind += (!biased.aborted && biased.acc_t < exp_decay[i].acc_t) ? 1 : 0;
    }

    EXPECT_GE(exp_over_const, 4u);
    EXPECT_EQ(increasing_behind, 10u);
    EXPECT_EQ(biased_behind, 5u);
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "exp>=const %zu/5, increasing behind %zu/10 (%zu aborted), biased behind %zu/5",
                  exp_over_const, increasing_behind, aborted, biased_behind);
    report.note = buf;
}

// ---------------------------------------------------------------------------
// 9. Determinism: identical runs agree to the byte.
// ---------------------------------------------------------------------------

TEST(Acceptance, Determinism) {
    CriterionReport report("determinism (repeated run is byte-identical)");
    TinyTask& tiny = tiny_task();
    auto run_once = [&] {
        era::EraModel model(tiny.topo);
        model.init(tiny.tc.seed);
        model.adopt_teacher(tiny.teacher.model);
        era::SgdMomentum opt(tiny.tc.momentum, tiny.tc.weight_decay);
        std::vector<era::EpochMetrics> history =
            era::distill(model, opt, tiny.data.train, tiny.data.test, tiny.tc);
        std::string checkpoint = era::serialize_checkpoint(
            era::checkpoint_from_era(model, &opt, history.size(), tiny.tc.seed));
        return std::make_pair(std::move(checkpoint), std::move(history));
    };
    auto [ckpt_a, hist_a] = run_once();
    auto [ckpt_b, hist_b] = run_once();

    EXPECT_EQ(ckpt_a, ckpt_b);
    ASSERT_EQ(hist_a.size(), hist_b.size());
    for (std::size_t i = 0; i < hist_a.size(); ++i) {
        EXPECT_EQ(hist_a[i].loss_total, hist_b[i].loss_total);
        EXPECT_EQ(hist_a[i].loss_kd, hist_b[i].loss_kd);
        EXPECT_EQ(hist_a[i].loss_fd, hist_b[i].loss_fd);
        EXPECT_EQ(hist_a[i].loss_cls, hist_b[i].loss_cls);
        EXPECT_EQ(hist_a[i].approx_error, hist_b[i].approx_error);
        EXPECT_EQ(hist_a[i].acc_s, hist_b[i].acc_s);
        EXPECT_EQ(hist_a[i].acc_t, hist_b[i].acc_t);
        EXPECT_EQ(hist_a[i].acc_st, hist_b[i].acc_st);
    }
}

// ---------------------------------------------------------------------------
// 10. Checkpoint round-trip: restoring a saved model changes nothing.
// ---------------------------------------------------------------------------

TEST(Acceptance, CheckpointRoundTrip) {
    CriterionReport report("checkpoint round-trip (bit-equal predictions and bytes)");
    TinyTask& tiny = tiny_task();
    era::EraModel model(tiny.topo);
    model.init(tiny.tc.seed);
    model.adopt_teacher(tiny.teacher.model);
    era::SgdMomentum opt(tiny.tc.momentum, tiny.tc.weight_decay);
    era::TrainConfig tc = tiny.tc;
    tc.epochs = 2;
    era::distill(model, opt, tiny.data.train, tiny.data.test, tc);

    std::string text = era::serialize_checkpoint(
        era::checkpoint_from_era(model, &opt, tc.epochs, tc.seed));
    std::istringstream in(text);
    era::EraRestore restored = era::restore_era(era::parse_checkpoint(in, "memory"));
    EXPECT_EQ(restored.epoch, tc.epochs);

    model.set_mode(era::Mode::eval);
    restored.model.set_mode(era::Mode::eval);
    era::Batch probe = era::ordered_batches(tiny.data.test, 16).front();
    era::InferenceSpec spec;
    spec.mode = era::InferenceMode::merged;
    spec.mu = 0.5;
    EXPECT_EQ(era::infer(model, probe.x, spec).values(),
              era::infer(restored.model, probe.x, spec).values());

    era::SgdMomentum opt_restored(tc.momentum, tc.weight_decay);
    opt_restored.velocity() = restored.velocity;
    EXPECT_EQ(text, era::serialize_checkpoint(era::checkpoint_from_era(
                        restored.model, &opt_restored, restored.epoch, restored.rng_seed)));
}
