#include "avbai/env.hpp"
#include "avbai/harness.hpp"
#include "avbai/regress.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace avbai;

namespace {

History simulate(const BanditInstance& inst, std::size_t n, std::uint64_t seed) {
    History h(inst.num_arms, inst.context_dim);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const Context x = sample_context(inst, rng);
        const std::size_t a = i % inst.num_arms;
        h.add({x, a, sample_outcome(inst, x, a, rng), 1.0 / static_cast<double>(inst.num_arms)});
    }
    return h;
}

}  // namespace

TEST(Regress, UnpulledArmsPredictPrior) {
    History h(3, 2);
    const MeanModel m = fit_mean_model(h);
    const VarianceModel v = fit_variance_model(h, m, 0.01, 1.0);
    const Context x = Context::Constant(2, 0.7);
    for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_DOUBLE_EQ(predict_mean(m, x, a), kPriorMean);
        EXPECT_DOUBLE_EQ(predict_variance(v, x, a), kPriorVariance);
    }
}

TEST(Regress, NoContextMeanIsSampleMean) {
    History h(2, 0);
    for (double y : {1.0, 0.0, 1.0, 1.0}) h.add({Context(), 0, y, 0.5});
    const MeanModel m = fit_mean_model(h);
    EXPECT_DOUBLE_EQ(predict_mean(m, Context(), 0), 0.75);
}

TEST(Regress, SeparableDataIsClipped) {
    History h(2, 1);
    for (int i = 0; i < 40; ++i) {
        const double x = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.1 * i);
        h.add({Context::Constant(1, x), 0, x > 0 ? 1.0 : 0.0, 0.5});
    }
    const MeanModel m = fit_mean_model(h);
    for (double x : {-50.0, -3.0, 3.0, 50.0}) {
        const double p = predict_mean(m, Context::Constant(1, x), 0);
        EXPECT_GE(p, kPredictionClip);
        EXPECT_LE(p, 1.0 - kPredictionClip);
    }
    EXPECT_DOUBLE_EQ(predict_mean(m, Context::Constant(1, 50.0), 0), 1.0 - kPredictionClip);
}

TEST(Regress, ProbitRecoversTrueCoefficients) {
    const auto inst = make_preset("mu1-bernoulli");
    const History h = simulate(inst, 4 * 5000, 21);
    const MeanModel m = fit_mean_model(h);
    for (std::size_t a = 0; a < 4; ++a) {
        const auto& fit = m.arms[a];
        ASSERT_EQ(fit.kind, FitKind::fitted);
        EXPECT_TRUE(fit.converged);
        EXPECT_NEAR(fit.beta[0], inst.link_constants[a], 0.1);
        for (int i = 1; i <= 4; ++i) EXPECT_NEAR(fit.beta[i], 1.0, 0.1);
    }
}

TEST(Regress, WarmStartedRefitMatchesColdFit) {
    const auto inst = make_preset("mu1-bernoulli");
    const History small = simulate(inst, 400, 5);
    const History big = simulate(inst, 800, 5);
    MeanModel warm = fit_mean_model(small);
    for (std::size_t a = 0; a < 4; ++a) refit_mean_arm(warm, big, a);
    const MeanModel cold = fit_mean_model(big);
    for (std::size_t a = 0; a < 4; ++a) EXPECT_LT((warm.arms[a].beta - cold.arms[a].beta).norm(), 1e-6);
    EXPECT_EQ(warm.fit_time, 800u);
}

TEST(Regress, PredictionIsTheLink) {
    MeanModel m;
    m.context_dim = 4;
    ArmMeanFit zero;
    zero.kind = FitKind::fitted;
    zero.beta = Eigen::VectorXd::Zero(5);
    ArmMeanFit truth = zero;
    truth.beta << -0.39, 1, 1, 1, 1;
    m.arms = {zero, truth};
    Context x(4);
    x << 0.5, -0.2, 0.1, 0.3;
    EXPECT_DOUBLE_EQ(predict_mean(m, x, 0), 0.5);
    EXPECT_NEAR(predict_mean(m, Context::Zero(4), 1), normal::cdf(-0.39), 1e-15);
    double prev = 0.0;
    for (double s = -2.0; s <= 2.0; s += 0.25) {
        Context y = x;
        y[2] = s;
        const double p = predict_mean(m, y, 1);
        EXPECT_GT(p, prev);
        prev = p;
    }
}

TEST(Regress, ZeroResidualsHitTheFloor) {
    History h(2, 0);
    for (int i = 0; i < 6; ++i) h.add({Context(), 0, 1.0, 0.5});
    const MeanModel m = fit_mean_model(h);
    const VarianceModel v = fit_variance_model(h, m, 0.01, 1.0);
    EXPECT_DOUBLE_EQ(predict_variance(v, Context(), 0), 0.01);
}

TEST(Regress, ConstantVarianceIsMeanSquaredResidual) {
    History h(2, 0);
    h.add({Context(), 0, 0.7, 0.5});
    h.add({Context(), 0, 0.9, 0.5});
    MeanModel m;
    ArmMeanFit fixed;
    fixed.kind = FitKind::constant;
    fixed.constant = 0.5;
    m.arms = {fixed, ArmMeanFit{}};
    const VarianceModel v = fit_variance_model(h, m, 0.01, 1.0);
    EXPECT_NEAR(predict_variance_raw(v, Context(), 0), 0.10, 1e-12);
    const VarianceModel tight = fit_variance_model(h, m, 0.01, 0.05);
    EXPECT_DOUBLE_EQ(predict_variance(tight, Context(), 0), 0.05);
}

// The variance model is linear in x, so on large samples it converges to the
// least-squares projection of v(x, a) onto (1, x), computed here from the truth.
TEST(Regress, VarianceConvergesToLinearProjection) {
    const auto inst = make_preset("mu1-bernoulli");
    const History h = simulate(inst, 4 * 20000, 31);
    const MeanModel m = fit_mean_model(h);
    const VarianceModel v = fit_variance_model(h, m, 0.01, 1.0);
    std::mt19937_64 rng(32);
    const int n = 400000;
    for (std::size_t a = 0; a < 4; ++a) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(5, 5);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(5);
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd z(5);
            z << 1.0, sample_context(inst, rng);
            gram += z * z.transpose();
            rhs += z * true_conditional_variance(inst, z.tail(4), a);
        }
        const Eigen::VectorXd coef = gram.ldlt().solve(rhs);
        for (double s : {-0.3, 0.0, 0.3}) {
            const Context x = Context::Constant(4, s);
            const double expected = std::clamp(coef[0] + coef.tail(4).dot(x), 0.01, 1.0);
            EXPECT_NEAR(predict_variance(v, x, a), expected, 0.01);
        }
    }
}

TEST(Regress, VarianceTracksBernoulliVariance) {
    // Weak context signal: v(x, a) is close to linear over the context range.
    auto inst = make_instance(OutcomeFamily::bernoulli_probit, {0.0, -0.28, -0.39, -0.57}, 4, 0.1);
    const History h = simulate(inst, 4 * 20000, 33);
    const MeanModel m = fit_mean_model(h);
    const VarianceModel v = fit_variance_model(h, m, 0.01, 1.0);
    Context x(4);
    x << 0.1, -0.1, 0.05, 0.0;
    for (std::size_t a = 0; a < 4; ++a)
        EXPECT_NEAR(predict_variance(v, x, a), true_conditional_variance(inst, x, a), 0.05);
}

TEST(Regress, TruncationHolds) {
    const auto inst = make_preset("mu2-beta");
    const History h = simulate(inst, 300, 35);
    const VarianceModel v = fit_variance_model(h, fit_mean_model(h), 0.01, 0.2);
    std::mt19937_64 rng(36);
    std::normal_distribution<double> z(0.0, 5.0);
    for (int i = 0; i < 2000; ++i) {
        Context x(4);
        for (int j = 0; j < 4; ++j) x[j] = z(rng);
        for (std::size_t a = 0; a < 5; ++a) {
            const double p = predict_variance(v, x, a);
            ASSERT_GE(p, 0.01);
            ASSERT_LE(p, 0.2);
        }
    }
}

TEST(Regress, RejectsBadInput) {
    History h(2, 1);
    EXPECT_THROW(h.add({Context::Zero(2), 0, 1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(h.add({Context::Zero(1), 5, 1.0, 1.0}), std::out_of_range);
    EXPECT_THROW(fit_variance_model(h, fit_mean_model(h), 0.0, 1.0), std::invalid_argument);
}
