#include "avbai/policy.hpp"
#include "avbai/selftest.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace avbai;
namespace gen = avbai::checks::gen;

namespace {

PolicyInputs diagonal_inputs(const ArmVector& mu, const ArmVector& s) {
    const Eigen::Index k = mu.size();
    PolicyInputs in;
    in.mu = mu;
    in.vgeo = ArmMatrix::Zero(k, k);
    in.vgeo.diagonal() = s;
    in.centred_pred = ArmMatrix::Zero(k, k);
    return in;
}

}  // namespace

TEST(Policy, ZeroThetaConstantVarianceIsUniform) {
    const ArmVector pi = policy_from_theta(ArmVector::Constant(4, 0.3), zero_theta(4));
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(pi[b], 0.25, 1e-15);
}

TEST(Policy, ProportionalToStandardDeviation) {
    ArmVector v(2);
    v << 4.0, 1.0;
    EXPECT_NEAR(policy_from_theta(v, zero_theta(2))[0], 2.0 / 3.0, 1e-15);
}

TEST(Policy, PropensityLowerBound) {
    std::mt19937_64 rng(5);
    const double eps = 0.01, vmax = 1.0, s = 3.0;
    for (int i = 0; i < 500; ++i) {
        const Eigen::Index k = 2 + i % 5;
        const ArmVector v = gen::uniform_vector(rng, k, eps, vmax);
        ArmVector theta = project_theta(gen::uniform_vector(rng, k, -s, s), s);
        const double s_eff = theta.cwiseAbs().maxCoeff();
        const double bound = 1.0 / (static_cast<double>(k) * std::sqrt(vmax / eps) * std::exp(2.0 * s_eff));
        EXPECT_GE(policy_from_theta(v, theta).minCoeff(), bound);
    }
}

TEST(Policy, ExtremeThetaStaysFinite) {
    ArmVector theta(3);
    theta << 900.0, -900.0, 0.0;
    const ArmVector pi = policy_from_theta(ArmVector::Constant(3, 0.2), theta);
    EXPECT_TRUE(pi.allFinite());
    EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
}

TEST(Policy, ProjectionPinsLastCoordinate) {
    ArmVector theta(3);
    theta << 150.0, -2.0, 7.0;
    const ArmVector p = project_theta(theta, 100.0);
    EXPECT_DOUBLE_EQ(p[0], 100.0);
    EXPECT_DOUBLE_EQ(p[1], -2.0);
    EXPECT_DOUBLE_EQ(p[2], 0.0);
}

TEST(Policy, DescentIterations) {
    EXPECT_EQ(descent_iterations(0), 10);
    EXPECT_EQ(descent_iterations(1), 11);
    EXPECT_EQ(descent_iterations(100), 15);
}

TEST(Policy, ObjectiveAtZeroThetaIsDiagonalSum) {
    ArmVector mu(3), s(3), w(3);
    mu << 0.6, 0.5, 0.3;
    s << 0.2, 0.3, 0.1;
    w << 0.5, -1.0, 0.5;
    const double expected = (0.25 * 0.2 + 1.0 * 0.3 + 0.25 * 0.1) / std::pow(w.dot(mu), 2);
    EXPECT_NEAR(*empirical_f(zero_theta(3), w, diagonal_inputs(mu, s)), expected, 1e-14);
}

TEST(Policy, ObjectiveMatchesStoredTrajectory) {
    // Five steps of predictions and variances, summed directly.
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    RunningStats stats(2);
    std::vector<ArmVector> hs, vs, phis;
    for (int i = 0; i < 5; ++i) {
        ArmVector h(2), v(2), phi(2);
        h << u(rng), u(rng);
        v << u(rng), u(rng);
        phi << u(rng) + 0.3, u(rng);
        update_stats(stats, phi, h, v);
        hs.push_back(h);
        vs.push_back(v);
        phis.push_back(phi);
    }
    ArmVector theta(2), w(2);
    theta << 0.4, 0.0;
    w << 1.0, -1.0;
    const PolicyInputs in = PolicyInputs::from_stats(stats);
    ArmVector mu = ArmVector::Zero(2);
    for (const auto& p : phis) mu += p / 5.0;
    double num = 0.0;
    for (int i = 0; i < 5; ++i) {
        double exposure = 0.0;
        for (int b = 0; b < 2; ++b) {
            double sum = 0.0;
            for (int a = 0; a < 2; ++a) sum += std::sqrt(vs[i][a] * vs[i][b]) * std::exp(theta[a] - theta[b]);
            exposure += w[b] * w[b] * sum;
        }
        const double spread = w.dot(hs[i] - mu);
        num += (exposure + spread * spread) / 5.0;
    }
    EXPECT_NEAR(*empirical_f(theta, w, in), num / std::pow(w.dot(mu), 2), 1e-10);
    PolicyInputs scaled = in;
    scaled.mu *= 3.0;
    EXPECT_NEAR(*empirical_f(theta, w, scaled) * 9.0, *empirical_f(theta, w, in), 1e-10);
}

TEST(Policy, TwoArmHandGradient) {
    ArmVector mu(2), w(2);
    mu << 1.0, 0.0;
    w << -1.0, 1.0;
    const PolicyInputs in = diagonal_inputs(mu, ArmVector::Ones(2));
    // With S_bar = I the off-diagonal terms vanish and the gradient is zero at theta = 0.
    EXPECT_NEAR(gradient_f(zero_theta(2), w, in)[0], 0.0, 1e-15);
    PolicyInputs full = in;
    full.vgeo.setConstant(1.0);
    // f(t) = w0^2 (1 + e^{-t}) + w1^2 (1 + e^{t}) with t = theta(0), so f'(0.5) = e^{0.5} - e^{-0.5}.
    ArmVector theta(2);
    theta << 0.5, 0.0;
    EXPECT_NEAR(gradient_f(theta, w, full)[0], std::exp(0.5) - std::exp(-0.5), 1e-14);
}

TEST(Policy, GradientMatchesFiniteDifferences) {
    const auto r = checks::gradient_vs_fd();
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Policy, SymmetricInstanceHasZeroGradient) {
    // Two exchangeable arms: equal |w| and a constant S_bar.
    ArmVector mu(2), w(2);
    mu << 0.6, 0.5;
    w << 1.0, -1.0;
    PolicyInputs in = diagonal_inputs(mu, ArmVector::Zero(2));
    in.vgeo.setConstant(0.2);
    EXPECT_EQ(gradient_f(zero_theta(2), w, in).norm(), 0.0);
    // Same for K = 4 when every weight has the same magnitude.
    ArmVector mu4(4), w4(4);
    mu4 << 0.7, 0.5, 0.6, 0.4;
    w4 << 1.0, -1.0, 1.0, 1.0;
    PolicyInputs in4 = diagonal_inputs(mu4, ArmVector::Zero(4));
    in4.vgeo.setConstant(0.3);
    EXPECT_EQ(gradient_f(zero_theta(4), w4, in4).norm(), 0.0);
}

TEST(Policy, InnerWeightAgainstGrid) {
    std::mt19937_64 rng(43);
    for (int i = 0; i < 20; ++i) {
        const ArmVector mu = gen::uniform_vector(rng, 3, 0.2, 0.8);
        const PolicyInputs in = gen::policy_inputs(rng, mu);
        ArmVector theta = project_theta(gen::uniform_vector(rng, 3, -3, 3), 3);
        const std::size_t a = gen::non_best_arm(rng, mu);
        const SnrSolution sol = inner_weight(theta, a, in);
        const SnrSolution grid = grid_oracle_snr({in.mu, policy_denominator(in, theta), a}, 1e-4);
        ASSERT_TRUE(sol.ok());
        EXPECT_LE(std::abs(sol.value - grid.value) / grid.value, 1e-3);
    }
}

TEST(Policy, ZeroThetaDenominator) {
    std::mt19937_64 rng(47);
    const ArmVector mu = gen::uniform_vector(rng, 4, 0.2, 0.8);
    const PolicyInputs in = gen::policy_inputs(rng, mu);
    ArmMatrix d = in.centred_pred;
    d.diagonal() += in.vgeo.colwise().sum().transpose();
    EXPECT_LT((policy_denominator(in, zero_theta(4)) - d).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Policy, PsgdZeroIterationsReturnsStart) {
    ArmVector mu(3), theta(3);
    mu << 0.6, 0.5, 0.4;
    theta << 0.3, -0.2, 0.0;
    const PsgdResult r = psgd(diagonal_inputs(mu, ArmVector::Constant(3, 0.2)), {}, theta, 0);
    EXPECT_EQ(r.theta, theta);
    EXPECT_EQ(r.iterations, 0);
}

TEST(Policy, PsgdBestSoFarIsMonotone) {
    const PsgdResult r = psgd(checks::frozen_k3_inputs(), {}, zero_theta(3), 200);
    ASSERT_EQ(r.best_trace.size(), 200u);
    for (std::size_t i = 1; i < r.best_trace.size(); ++i) EXPECT_LE(r.best_trace[i], r.best_trace[i - 1]);
    EXPECT_DOUBLE_EQ(r.best_trace.back(), r.objective);
}

TEST(Policy, PsgdReachesGridMinimum) {
    const auto r = checks::psgd_vs_grid();
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Policy, Gamma1TwoArm) {
    ArmVector mu(2);
    mu << 1.0, 0.0;
    const Gamma1Result g = gamma1(mu, ArmMatrix::Identity(2, 2));
    EXPECT_NEAR(g.snr[1], 1.0 / std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(g.value, 2.0, 1e-12);
    EXPECT_NEAR(gamma1(mu, 4.0 * ArmMatrix::Identity(2, 2)).value, 8.0, 1e-12);
    EXPECT_NEAR(g.bound(0.1), 4.0 * std::log(10.0), 1e-12);
}

TEST(Policy, Gamma1AgainstGrid) {
    std::mt19937_64 rng(53);
    const ArmVector mu = gen::uniform_vector(rng, 3, 0.0, 1.0);
    const ArmMatrix d = gen::psd_matrix(rng, 3);
    const std::size_t best = unique_best(mu);
    double worst = 1e300;
    for (std::size_t a = 0; a < 3; ++a)
        if (a != best) worst = std::min(worst, grid_oracle_snr({mu, d, a}, 1e-4).value);
    EXPECT_NEAR(gamma1(mu, d).value, 1.0 / (worst * worst), 1e-3 / (worst * worst));
}

TEST(Policy, Gamma2TwoArm) {
    ArmVector mu(2), s2(2);
    mu << 0.6, 0.5;
    s2 << 0.25, 0.25;
    const Gamma2Result g = gamma2(mu, s2);
    EXPECT_NEAR(g.value, 200.0, 1e-6);
    EXPECT_NEAR(g.allocation[0], 0.5, 1e-6);
    const ArmVector shifted = mu.array() + 3.0;
    EXPECT_NEAR(gamma2(shifted, s2).value, g.value, 1e-6);
}

TEST(Policy, Gamma2AgainstKlProjection) {
    std::mt19937_64 rng(59);
    for (int i = 0; i < 10; ++i) {
        const Eigen::Index k = 3 + i % 3;
        const ArmVector mu = gen::uniform_vector(rng, k, 0.0, 1.0);
        const ArmVector s2 = gen::uniform_vector(rng, k, 0.05, 0.5);
        const Gamma2Result g = gamma2(mu, s2);
        EXPECT_NEAR(divergence_value(mu, s2, g.allocation), 1.0 / g.value, 1e-6 / g.value);
        // No random allocation does better.
        for (int j = 0; j < 20; ++j)
            EXPECT_LE(divergence_value(mu, s2, gen::simplex_point(rng, k, 0.01)), 1.0 / g.value * (1 + 1e-9));
    }
}

TEST(Policy, TwoArmedHomoscedasticReduction) {
    const auto r = checks::two_armed();
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Policy, TwoArmedPolicyAndStrictImprovement) {
    TwoArmedModel m;
    m.sample_context = [](std::mt19937_64& rng) {
        std::normal_distribution<double> z(0.0, 1.0);
        return Context::Constant(1, z(rng));
    };
    m.mean = [](const Context& x, std::size_t a) { return a == 0 ? 0.6 + 0.1 * x[0] : 0.5 - 0.1 * x[0]; };
    m.variance = [](const Context&, std::size_t a) { return a == 0 ? 0.4 : 0.1; };
    m.mu[0] = 0.6;
    m.mu[1] = 0.5;
    EXPECT_NEAR(two_armed_policy(m, Context::Zero(1), 0), 2.0 / 3.0, 1e-15);
    const TwoArmedLimits lim = two_armed_limits(m, 200000, 3);
    EXPECT_TRUE(lim.strict_improvement);
    // E[(sqrt .4 + sqrt .1)^2] + E[(0.2 x)^2] = 0.9 + 0.04
    EXPECT_NEAR(lim.gamma2, 2.0 * 0.94 / 0.01, 4.0 * lim.standard_error);
    EXPECT_THROW(two_armed_model(make_instance(OutcomeFamily::bernoulli_probit, {0, 0, 0}, 1)),
                 std::invalid_argument);
}

TEST(Policy, PopulationInputsMatchPresetMeans) {
    const auto inst = make_instance(OutcomeFamily::bernoulli_probit, {0.0, -0.5}, 2);
    const PolicyInputs in = population_inputs(inst, 0.01, 1.0, 100000, 7);
    EXPECT_EQ(in.mu, true_arm_means(inst));
    EXPECT_GT(in.centred_pred(0, 0), 0.0);
    EXPECT_NEAR(in.centred_pred(0, 1), in.centred_pred(1, 0), 1e-15);
    EXPECT_GT(in.centred_pred.determinant(), -1e-12);
}
