#pragma once

// Invariant checks against independent oracles (grid search, finite
// differences, brute-force recomputation, closed forms). Shared by the CLI
// `selftest` command and the acceptance suite.

#include "avbai/confseq.hpp"
#include "avbai/env.hpp"
#include "avbai/harness.hpp"
#include "avbai/policy.hpp"
#include "avbai/scorekit.hpp"
#include "avbai/snr.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace avbai::checks {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace gen {

inline ArmVector uniform_vector(std::mt19937_64& rng, Eigen::Index k, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    ArmVector v(k);
    for (Eigen::Index i = 0; i < k; ++i) v[i] = u(rng);
    return v;
}

inline ArmVector simplex_point(std::mt19937_64& rng, Eigen::Index k, double min_share = 0.0) {
    std::exponential_distribution<double> e(1.0);
    ArmVector v(k);
    for (Eigen::Index i = 0; i < k; ++i) v[i] = e(rng);
    v /= v.sum();
    return (1.0 - min_share * k) * v + ArmVector::Constant(k, min_share);
}

// A A^T / k plus a small ridge: symmetric positive definite.
inline ArmMatrix psd_matrix(std::mt19937_64& rng, Eigen::Index k, double ridge = 0.05) {
    std::normal_distribution<double> z(0.0, 1.0);
    ArmMatrix a(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) a(i, j) = z(rng);
    ArmMatrix out = a * a.transpose() / static_cast<double>(k);
    out.diagonal().array() += ridge;
    return out;
}

inline std::size_t non_best_arm(std::mt19937_64& rng, const ArmVector& mu) {
    Eigen::Index best = 0;
    mu.maxCoeff(&best);
    std::uniform_int_distribution<Eigen::Index> pick(0, mu.size() - 2);
    Eigen::Index a = pick(rng);
    if (a >= best) ++a;
    return static_cast<std::size_t>(a);
}

// S_bar and the centred prediction Gram from simulated (h, V) draws, mimicking
// what RunningStats accumulates.
inline PolicyInputs policy_inputs(std::mt19937_64& rng, const ArmVector& mu, std::size_t draws = 200) {
    const Eigen::Index k = mu.size();
    std::uniform_real_distribution<double> var(0.02, 0.3);
    std::normal_distribution<double> z(0.0, 0.05);
    ArmMatrix vgeo = ArmMatrix::Zero(k, k), pg = ArmMatrix::Zero(k, k);
    ArmVector root(k), h(k), hbar = ArmVector::Zero(k);
    for (std::size_t i = 0; i < draws; ++i) {
        for (Eigen::Index a = 0; a < k; ++a) {
            root[a] = std::sqrt(var(rng));
            h[a] = mu[a] + z(rng);
        }
        vgeo += root * root.transpose();
        pg += h * h.transpose();
        hbar += h;
    }
    const double n = static_cast<double>(draws);
    PolicyInputs in;
    in.mu = mu;
    in.vgeo = vgeo / n;
    hbar /= n;
    pg /= n;
    in.centred_pred = pg - hbar * mu.transpose() - mu * hbar.transpose() + mu * mu.transpose();
    in.centred_pred = 0.5 * (in.centred_pred + in.centred_pred.transpose()).eval();
    return in;
}

}  // namespace gen

inline std::string fmt(double x) { return format_real(x); }

inline double grid_resolution(std::size_t k) {
    if (k <= 3) return 1e-4;
    if (k == 4) return 1e-3;
    return 1.0 / 200.0;
}

// True arm means of the presets against the reference vectors.
inline CheckResult preset_means(double tol = 0.005) {
    const std::vector<std::pair<std::string, std::vector<double>>> expected{
        {"mu1-bernoulli", {0.5, 0.45, 0.43, 0.4}}, {"mu2-bernoulli", {0.3, 0.21, 0.2, 0.19, 0.18}}};
    double worst = 0.0;
    for (const auto& [name, mu] : expected) {
        const ArmVector got = true_arm_means(make_preset(name));
        for (std::size_t a = 0; a < mu.size(); ++a)
            worst = std::max(worst, std::abs(got[static_cast<Eigen::Index>(a)] - mu[a]));
    }
    return {"preset arm means", worst <= tol, "max abs deviation " + fmt(worst)};
}

// 1/2 SNR^2 with D = diag(sigma^2 / pi) equals the Gaussian KL projection.
inline CheckResult kl_identity(std::size_t instances = 50, std::uint64_t seed = 11, double tol = 1e-6) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> kdist(2, 4);
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        const Eigen::Index k = kdist(rng);
        const ArmVector mu = gen::uniform_vector(rng, k, 0.0, 1.0);
        const ArmVector s2 = gen::uniform_vector(rng, k, 0.05, 1.0);
        const ArmVector pi = gen::simplex_point(rng, k, 0.02);
        const std::size_t a = gen::non_best_arm(rng, mu);
        ArmMatrix d = ArmMatrix::Zero(k, k);
        d.diagonal() = s2.cwiseQuotient(pi);
        const SnrSolution sol = solve_snr({mu, d, a});
        const double lhs = 0.5 * sol.value * sol.value;
        const double rhs = kl_projection_value(mu, s2, pi, a);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return {"KL projection identity", worst <= tol, "max abs gap " + fmt(worst)};
}

// solve_snr against the exhaustive simplex grid, plus per-solve wall time.
inline CheckResult solver_vs_grid(std::size_t instances = 100, std::uint64_t seed = 12, double rel_tol = 1e-3,
                                  double max_ms = 10.0) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> kdist(3, 5);
    double worst_rel = 0.0, slowest = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        const Eigen::Index k = kdist(rng);
        const ArmVector mu = gen::uniform_vector(rng, k, 0.0, 1.0);
        const ArmMatrix d = gen::psd_matrix(rng, k);
        const std::size_t a = gen::non_best_arm(rng, mu);
        const SnrProblem problem{mu, d, a};
        const auto start = std::chrono::steady_clock::now();
        const SnrSolution sol = solve_snr(problem);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        slowest = std::max(slowest, ms);
        const SnrSolution grid = grid_oracle_snr(problem, grid_resolution(static_cast<std::size_t>(k)));
        if (!sol.ok() || !sol.weight.valid(kWeightTolerance)) return {"SNR solver vs grid", false, "invalid solution"};
        worst_rel = std::max(worst_rel, std::abs(sol.value - grid.value) / std::abs(grid.value));
    }
    return {"SNR solver vs grid", worst_rel <= rel_tol && slowest < max_ms,
            "max rel gap " + fmt(worst_rel) + ", slowest solve " + fmt(slowest) + " ms"};
}

inline Eigen::VectorXd finite_difference_f(const ArmVector& theta, const ArmVector& w, const PolicyInputs& in,
                                           double h) {
    const Eigen::Index k = theta.size();
    Eigen::VectorXd g(k - 1);
    for (Eigen::Index c = 0; c + 1 < k; ++c) {
        ArmVector up = theta, down = theta;
        up[c] += h;
        down[c] -= h;
        g[c] = (*empirical_f(up, w, in) - *empirical_f(down, w, in)) / (2.0 * h);
    }
    return g;
}

inline CheckResult gradient_vs_fd(std::size_t cases = 100, std::uint64_t seed = 13, double rel_tol = 1e-5) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> kdist(2, 5);
    double worst = 0.0;
    for (std::size_t i = 0; i < cases; ++i) {
        const Eigen::Index k = kdist(rng);
        const ArmVector mu = gen::uniform_vector(rng, k, 0.2, 0.8);
        const PolicyInputs in = gen::policy_inputs(rng, mu);
        ArmVector theta = gen::uniform_vector(rng, k, -2.0, 2.0);
        theta[k - 1] = 0.0;
        const std::size_t a = gen::non_best_arm(rng, mu);
        WeightVector w = default_weight(static_cast<std::size_t>(k), a);
        const ArmVector p = gen::simplex_point(rng, k);
        double rest = 0.0;
        for (Eigen::Index b = 0; b < k; ++b)
            if (b != static_cast<Eigen::Index>(a)) rest += p[b];
        for (Eigen::Index b = 0; b < k; ++b)
            if (b != static_cast<Eigen::Index>(a)) w.w[b] = p[b] / rest;
        if (std::abs(w.w.dot(mu)) < 1e-3) continue;  // f undefined at w^T mu = 0
        const Eigen::VectorXd g = gradient_f(theta, w.w, in);
        const Eigen::VectorXd fd = finite_difference_f(theta, w.w, in, 1e-6);
        worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
    }
    return {"policy gradient vs finite differences", worst < rel_tol, "max rel error " + fmt(worst)};
}

// Two arms, equal variance sigma^2, gap Delta.
inline CheckResult two_armed(double sigma = 0.5, double gap = 0.1, std::size_t draws = 1000000) {
    ArmVector mu(2), s2(2);
    mu << 0.5 + gap, 0.5;
    s2 << sigma * sigma, sigma * sigma;
    const double numeric = gamma2(mu, s2).value;
    const double closed = 8.0 * sigma * sigma / (gap * gap);
    TwoArmedModel m;
    m.sample_context = [](std::mt19937_64& rng) {
        std::normal_distribution<double> z(0.0, 1.0);
        Context x(4);
        for (Eigen::Index i = 0; i < 4; ++i) x[i] = z(rng);
        return x;
    };
    m.mean = [mu](const Context&, std::size_t a) { return mu[static_cast<Eigen::Index>(a)]; };
    m.variance = [s2](const Context&, std::size_t a) { return s2[static_cast<Eigen::Index>(a)]; };
    m.mu[0] = mu[0];
    m.mu[1] = mu[1];
    const TwoArmedLimits lim = two_armed_limits(m, draws, 14);
    const bool ok_closed = std::abs(numeric - closed) <= 0.01 * closed;
    const bool ok_mc = std::abs(numeric - lim.gamma2) <= 3.0 * lim.standard_error + 1e-6 * closed;
    return {"two-armed Gamma_2", ok_closed && ok_mc,
            "numeric " + fmt(numeric) + ", 8 sigma^2/Delta^2 " + fmt(closed) + ", Monte Carlo " + fmt(lim.gamma2) +
                " (se " + fmt(lim.standard_error) + ")"};
}

inline CheckResult boundary_values() {
    const double a = boundary(1.0, 1.0, 0.5, 1.0);
    const double b = boundary(1.0, 1.0, 0.1, 1.0);
    const double l2 = boundary(1e2, 0.5, 0.1, 0.06);
    const double l4 = boundary(1e4, 0.5, 0.1, 0.06);
    const double l6 = boundary(1e6, 0.5, 0.1, 0.06);
    const bool ok = std::abs(a - 1.8776) <= 1e-3 && std::abs(b - 2.8902) <= 1e-3 && l2 > l4 && l4 > l6;
    return {"boundary values", ok,
            "l(alpha=.5) " + fmt(a) + ", l(alpha=.1) " + fmt(b) + ", decay " + fmt(l2) + " > " + fmt(l4) + " > " +
                fmt(l6)};
}

// A fixed K = 3 objective for the theta-grid comparison.
inline PolicyInputs frozen_k3_inputs() {
    std::mt19937_64 rng(15);
    ArmVector mu(3);
    mu << 0.9, 0.6, 0.4;
    return gen::policy_inputs(rng, mu, 400);
}

inline CheckResult psgd_vs_grid(int iterations = 500, double grid_step = 0.01, double tol = 1e-2) {
    const PolicyInputs in = frozen_k3_inputs();
    PolicyConfig cfg;
    const PsgdResult res = psgd(in, cfg, zero_theta(3), iterations);
    PolicyConfig grid_cfg = cfg;
    grid_cfg.snr.method = SnrMethod::active_set;
    double best = std::numeric_limits<double>::infinity();
    const int steps = static_cast<int>(std::lround(4.0 / grid_step));
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; j <= steps; ++j) {
            ArmVector theta(3);
            theta << -2.0 + i * grid_step, -2.0 + j * grid_step, 0.0;
            const ObjectiveEval ev = evaluate_objective(theta, in, grid_cfg);
            if (ev.ok()) best = std::min(best, ev.value);
        }
    }
    return {"PSGD vs theta grid", res.objective <= best + tol,
            "PSGD " + fmt(res.objective) + ", grid minimum " + fmt(best)};
}

inline CheckResult stats_vs_batch(std::size_t updates = 100, std::uint64_t seed = 16, double tol = 1e-10) {
    std::mt19937_64 rng(seed);
    const Eigen::Index k = 4;
    RunningStats stats(static_cast<std::size_t>(k));
    std::vector<ArmVector> phis, hs, vs;
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (std::size_t i = 0; i < updates; ++i) {
        ArmVector phi(k), h(k), v(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            phi[a] = 0.5 + z(rng);
            h[a] = u(rng);
            v[a] = u(rng);
        }
        update_stats(stats, phi, h, v);
        phis.push_back(phi);
        hs.push_back(h);
        vs.push_back(v);
    }
    ArmVector mu = ArmVector::Zero(k), prefix = ArmVector::Zero(k), hbar = ArmVector::Zero(k);
    ArmMatrix m = ArmMatrix::Zero(k, k), l = ArmMatrix::Zero(k, k), s = ArmMatrix::Zero(k, k);
    for (std::size_t i = 0; i < updates; ++i) {
        prefix += phis[i];
        const ArmVector running = prefix / static_cast<double>(i + 1);
        const ArmVector dev = phis[i] - running;
        m += dev * dev.transpose();
        l += hs[i] * hs[i].transpose();
        hbar += hs[i];
        for (Eigen::Index a = 0; a < k; ++a)
            for (Eigen::Index b = 0; b < k; ++b) s(a, b) += std::sqrt(vs[i][a] * vs[i][b]);
    }
    const double n = static_cast<double>(updates);
    mu = prefix / n;
    const double err = std::max({(stats.mu - mu).cwiseAbs().maxCoeff(), (stats.gram - m / n).cwiseAbs().maxCoeff(),
                                 (stats.pred_gram - l / n).cwiseAbs().maxCoeff(),
                                 (stats.pred_mean - hbar / n).cwiseAbs().maxCoeff(),
                                 (stats.vgeo - s / n).cwiseAbs().maxCoeff()});
    return {"running stats vs batch", err <= tol, "max abs error " + fmt(err)};
}

inline std::vector<CheckResult> run_all() {
    return {preset_means(),       kl_identity(),     solver_vs_grid(), gradient_vs_fd(),
            two_armed(),          boundary_values(), psgd_vs_grid(),   stats_vs_batch()};
}

}  // namespace avbai::checks
