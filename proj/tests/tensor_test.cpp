#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "era/gradcheck.hpp"
#include "era/tensor.hpp"

namespace {

using era::Tape;
using era::Tensor;

TEST(Tensor, ConstructionValidatesShapeAndValues) {
    Tensor t = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    EXPECT_EQ(t.numel(), 4u);
    EXPECT_EQ(t.at(1, 0), 3.0);
    EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0}), era::DimensionError);
    EXPECT_THROW(Tensor::from({0}, {}), era::DimensionError);
    EXPECT_THROW(Tensor::from({1}, {std::nan("")}), era::NumericError);
}

TEST(Tensor, GradIsZeroAfterCreation) {
    Tensor t = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    for (double g : t.grad()) {
        EXPECT_EQ(g, 0.0);
    }
}

TEST(Tensor, DetachCutsGradientFlow) {
    Tape tape;
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor d = x.detach();
    EXPECT_FALSE(d.requires_grad());
    Tensor y = era::sum(tape, d);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_EQ(tape.size(), 0u);
}

TEST(Matmul, HandOracle) {
    // [[1,2],[3,4]] * [[1],[1]] = [[3],[7]].
    Tape tape;
    Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor b = Tensor::from({2, 1}, {1.0, 1.0});
    Tensor c = era::matmul(tape, a, b);
    ASSERT_EQ(c.shape(), (era::Shape{2, 1}));
    EXPECT_DOUBLE_EQ(c.values()[0], 3.0);
    EXPECT_DOUBLE_EQ(c.values()[1], 7.0);
}

TEST(Matmul, BackwardHandOracle) {
    // loss = sum(a*b) with a=[[1,2],[3,4]], b=[[1],[1]]:
    // da = ones(2,1) * b^T = [[1,1],[1,1]], db = a^T * ones = [[4],[6]].
    Tape tape;
    Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
    Tensor b = Tensor::from({2, 1}, {1.0, 1.0}, true);
    Tensor loss = era::sum(tape, era::matmul(tape, a, b));
    EXPECT_DOUBLE_EQ(loss.item(), 10.0);
    tape.backward(loss);
    EXPECT_EQ(a.grad(), (std::vector<double>{1.0, 1.0, 1.0, 1.0}));
    EXPECT_EQ(b.grad(), (std::vector<double>{4.0, 6.0}));
}

TEST(Matmul, RejectsMismatchedInnerDimension) {
    Tape tape;
    Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
    EXPECT_THROW(era::matmul(tape, a, b), era::DimensionError);
}

TEST(Elementwise, AddSubMulForwardAndBackward) {
    Tape tape;
    Tensor a = Tensor::from({2}, {1.0, 4.0}, true);
    Tensor b = Tensor::from({2}, {2.0, -3.0}, true);
    Tensor s = era::add(tape, a, b);
    Tensor d = era::sub(tape, a, b);
    Tensor p = era::mul(tape, a, b);
    EXPECT_EQ(s.values(), (std::vector<double>{3.0, 1.0}));
    EXPECT_EQ(d.values(), (std::vector<double>{-1.0, 7.0}));
    EXPECT_EQ(p.values(), (std::vector<double>{2.0, -12.0}));

    // loss = sum(a*b): da = b, db = a.
    Tensor loss = era::sum(tape, p);
    tape.backward(loss);
    EXPECT_EQ(a.grad(), b.values());
    EXPECT_EQ(b.grad(), a.values());

    Tensor c = Tensor::from({3}, {1.0, 1.0, 1.0});
    Tape other;
    EXPECT_THROW(era::add(other, a, c), era::DimensionError);
}

TEST(Elementwise, ScaleBackward) {
    Tape tape;
    Tensor a = Tensor::from({2}, {5.0, -1.0}, true);
    Tensor loss = era::sum(tape, era::scale(tape, a, 2.5));
    EXPECT_DOUBLE_EQ(loss.item(), 10.0);
    tape.backward(loss);
    EXPECT_EQ(a.grad(), (std::vector<double>{2.5, 2.5}));
}

TEST(Elementwise, AddRowvecBroadcastsExplicitly) {
    Tape tape;
    Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
    Tensor v = Tensor::from({2}, {10.0, 20.0}, true);
    Tensor out = era::add_rowvec(tape, a, v);
    EXPECT_EQ(out.values(), (std::vector<double>{11.0, 22.0, 13.0, 24.0}));
    Tensor loss = era::sum(tape, out);
    tape.backward(loss);
    EXPECT_EQ(v.grad(), (std::vector<double>{2.0, 2.0}));

    Tensor wrong = Tensor::from({3}, {1.0, 1.0, 1.0});
    Tape other;
    EXPECT_THROW(era::add_rowvec(other, a, wrong), era::DimensionError);
}

TEST(Relu, ZeroInputGetsZeroGradient) {
    // Subgradient at exactly 0 is 0; positive entries pass through.
    Tape tape;
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0}, true);
    Tensor y = era::relu(tape, x);
    EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 2.0}));
    Tensor loss = era::sum(tape, y);
    tape.backward(loss);
    EXPECT_EQ(x.grad(), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Mean, ForwardAndUniformBackward) {
    // mean([1,2,3,4]) = 2.5, each input receives gradient 1/4.
    Tape tape;
    Tensor x = Tensor::from({4}, {1.0, 2.0, 3.0, 4.0}, true);
    Tensor m = era::mean(tape, x);
    EXPECT_DOUBLE_EQ(m.item(), 2.5);
    tape.backward(m);
    EXPECT_EQ(x.grad(), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
}

TEST(Softmax, TemperatureOneHandOracle) {
    // softmax([ln 3, 0]) = (3/4, 1/4).
    Tape tape;
    Tensor logits = Tensor::from({1, 2}, {std::log(3.0), 0.0});
    Tensor p = era::softmax_with_temperature(tape, logits, 1.0);
    EXPECT_NEAR(p.values()[0], 0.75, 1e-12);
    EXPECT_NEAR(p.values()[1], 0.25, 1e-12);
}

TEST(Softmax, TemperatureScalesLogits) {
    // With T = 2, logits (2 ln 3, 0) reduce to (ln 3, 0).
    Tape tape;
    Tensor logits = Tensor::from({1, 2}, {2.0 * std::log(3.0), 0.0});
    Tensor p = era::softmax_with_temperature(tape, logits, 2.0);
    EXPECT_NEAR(p.values()[0], 0.75, 1e-12);
    EXPECT_NEAR(p.values()[1], 0.25, 1e-12);
}

TEST(Softmax, StableForHugeLogits) {
    Tape tape;
    Tensor logits = Tensor::from({1, 3}, {1e6, 0.0, -1e6});
    Tensor p = era::softmax_with_temperature(tape, logits, 1.0);
    double row = p.values()[0] + p.values()[1] + p.values()[2];
    EXPECT_NEAR(row, 1.0, 1e-12);
    EXPECT_NEAR(p.values()[0], 1.0, 1e-12);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
    Tape tape;
    Tensor logits = Tensor::from({1, 2}, {0.0, 0.0});
    EXPECT_THROW(era::softmax_with_temperature(tape, logits, 0.0), era::ParameterError);
    EXPECT_THROW(era::softmax_with_temperature(tape, logits, -1.0), era::ParameterError);
}

TEST(Tape, SecondBackwardWithoutResetIsRejected) {
    Tape tape;
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor loss = era::sum(tape, x);
    tape.backward(loss);
    EXPECT_THROW(tape.backward(loss), era::StateError);

    tape.reset();
    Tensor loss2 = era::sum(tape, x);
    EXPECT_NO_THROW(tape.backward(loss2));
}

TEST(Tape, RecordingOnConsumedTapeIsRejected) {
    Tape tape;
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor loss = era::sum(tape, x);
    tape.backward(loss);
    EXPECT_THROW(era::sum(tape, x), era::StateError);
}

TEST(Tape, BackwardDemandsScalarLoss) {
    Tape tape;
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y = era::scale(tape, x, 2.0);
    EXPECT_THROW(tape.backward(y), era::ContractError);
}

TEST(Tape, NodeIdsFollowRecordingOrder) {
    Tape tape;
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    EXPECT_EQ(x.node_id(), 0u);
    Tensor a = era::scale(tape, x, 2.0);
    Tensor b = era::sum(tape, a);
    EXPECT_EQ(a.node_id(), 1u);
    EXPECT_EQ(b.node_id(), 2u);
}

TEST(Tape, ConstantsAreNotRecorded) {
    Tape tape;
    Tensor a = Tensor::from({2}, {1.0, 2.0});
    Tensor b = Tensor::from({2}, {3.0, 4.0});
    Tensor c = era::add(tape, a, b);
    EXPECT_FALSE(c.requires_grad());
    EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, GradientAccumulationIsAdditive) {
    // Two separate backward passes accumulate exactly the gradient that one
    // pass over the summed loss produces.
    Tensor x = Tensor::from({2}, {1.5, -0.5}, true);

    Tape joint;
    Tensor l1 = era::sum(joint, era::mul(joint, x, x));
    Tensor l2 = era::mean(joint, era::scale(joint, x, 3.0));
    Tensor total = era::add(joint, l1, l2);
    joint.backward(total);
    std::vector<double> joint_grad = x.grad();

    x.zero_grad();
    Tape t1;
    Tensor m1 = era::sum(t1, era::mul(t1, x, x));
    t1.backward(m1);
    Tape t2;
    Tensor m2 = era::mean(t2, era::scale(t2, x, 3.0));
    t2.backward(m2);

    ASSERT_EQ(joint_grad.size(), x.grad().size());
    for (std::size_t i = 0; i < joint_grad.size(); ++i) {
        EXPECT_DOUBLE_EQ(joint_grad[i], x.grad()[i]);
    }
}

TEST(Tape, ReplayIsBitReproducible) {
    auto run = [](std::vector<double>& grad_out) {
        Tape tape;
        Tensor x = Tensor::from({2, 3}, {0.3, -1.2, 0.7, 2.2, -0.4, 0.05}, true);
        Tensor w = Tensor::from({3, 2}, {1.0, -0.5, 0.25, 2.0, -1.5, 0.75}, true);
        Tensor h = era::relu(tape, era::matmul(tape, x, w));
        Tensor loss = era::mean(tape, era::mul(tape, h, h));
        tape.backward(loss);
        grad_out = w.grad();
        return loss.item();
    };
    std::vector<double> g1, g2;
    double v1 = run(g1);
    double v2 = run(g2);
    EXPECT_EQ(v1, v2);
    EXPECT_EQ(g1, g2);
}

TEST(Numeric, OverflowRaisesInsteadOfPropagating) {
    Tape tape;
    Tensor big = Tensor::from({1}, {1e300}, true);
    EXPECT_THROW(era::mul(tape, big, big), era::NumericError);
}

TEST(GradCheck, SumIsExact) {
    // Dyadic inputs and a power-of-two eps keep every perturbed sum exactly
    // representable, so the central difference reproduces the gradient of
    // sum() with zero error.
    auto f = [](Tape& tape, Tensor& x) { return era::sum(tape, x); };
    Tensor x = Tensor::from({4}, {0.25, -1.0, 2.0, 0.0});
    era::GradCheckReport report = era::check_gradients(f, x, std::ldexp(1.0, -17), 1e-4);
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(GradCheck, SmallNetworkPassesTightly) {
    std::mt19937_64 rng(12345);
    Tensor w = Tensor::randn({4, 3}, rng, 0.7, true);
    auto f = [&w](Tape& tape, Tensor& x) {
        Tensor h = era::relu(tape, era::matmul(tape, x, w));
        Tensor p = era::softmax_with_temperature(tape, h, 2.0);
        return era::mean(tape, era::mul(tape, p, p));
    };
    Tensor x = Tensor::randn({2, 4}, rng, 1.0);
    era::GradCheckReport report = era::check_gradients(f, x, 1e-5, 1e-4);
    EXPECT_TRUE(report.passed);
    EXPECT_LT(report.max_rel_error, 1e-6);
}

TEST(GradCheck, CorruptedBackwardRuleIsCaught) {
    // A sum whose adjoint deliberately doubles the true gradient.
    auto broken_sum = [](Tape& tape, Tensor& x) {
        double acc = 0.0;
        for (double v : x.values()) acc += v;
        Tensor out = Tensor::from({1}, {acc}, true);
        tape.record(out, [x, out]() {
            for (std::size_t i = 0; i < x.numel(); ++i) {
                x.grad()[i] += 2.0 * out.grad()[0];
            }
        });
        return out;
    };
    Tensor x = Tensor::from({3}, {0.1, 0.2, 0.3});
    era::GradCheckReport report = era::check_gradients(broken_sum, x, 1e-5, 1e-4);
    EXPECT_FALSE(report.passed);
    EXPECT_NEAR(report.max_rel_error, 0.5, 1e-6);
}

TEST(GradCheck, RejectsEpsOutsideRange) {
    auto f = [](Tape& tape, Tensor& x) { return era::sum(tape, x); };
    Tensor x = Tensor::from({2}, {1.0, 2.0});
    EXPECT_THROW(era::check_gradients(f, x, 1e-8, 1e-4), era::ParameterError);
    EXPECT_THROW(era::check_gradients(f, x, 1e-2, 1e-4), era::ParameterError);
}

} // namespace
