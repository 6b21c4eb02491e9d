#pragma once

// Signal-to-noise maximisation over Delta(a):
//
//     maximise  w^T mu / sqrt(w^T D w)   over  w(a) = -1,  w(-a) in the simplex.
//
// Writing w = P p with p on the (K-1)-simplex turns the numerator into r^T p,
// r(b) = mu(b) - mu(a), and the denominator into sqrt(p^T Q p), Q = P^T D P.
// The ratio is scale free, so the same optimum is the Charnes-Cooper-Schaible
// programme  max r^T g  s.t.  g^T Q g <= 1, g >= 0,  normalised back onto the
// simplex. Two solvers are provided: Dinkelbach's parametric iteration (default)
// and an exact support enumeration of the equivalent QP
// min g^T Q g  s.t.  r^T g = 1, g >= 0.

#include "avbai/scorekit.hpp"
#include "avbai/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace avbai {

struct SnrProblem {
    ArmVector mu;
    ArmMatrix denom;  // symmetric PSD
    std::size_t target = 0;

    std::size_t num_arms() const { return static_cast<std::size_t>(mu.size()); }
};

inline constexpr double kDegenerateVariance = 1e-14;

// w^T mu / sqrt(w^T D w); nullopt when the quadratic form is degenerate.
inline std::optional<double> snr_value(const SnrProblem& problem, const ArmVector& w) {
    const double q = w.dot(problem.denom * w);
    if (!(q > kDegenerateVariance)) return std::nullopt;
    return w.dot(problem.mu) / std::sqrt(q);
}

enum class SnrStatus { ok, degenerate_variance, no_positive_direction };
enum class SnrMethod { dinkelbach, active_set };

struct SnrOptions {
    SnrMethod method = SnrMethod::dinkelbach;
    double relative_tolerance = 1e-9;
    int max_outer_iterations = 200;
    int max_inner_iterations = 2000;
    double inner_tolerance = 1e-13;
    bool record_trace = false;
};

struct SnrSolution {
    WeightVector weight;
    double value = 0.0;
    SnrStatus status = SnrStatus::ok;
    int outer_iterations = 0;
    std::vector<double> trace;  // Dinkelbach lambda sequence, when requested

    bool ok() const { return status == SnrStatus::ok; }
};

namespace detail {

using FreeVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxArms, 1>;
using FreeMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxArms, kMaxArms>;

// The problem restated over the free coordinates p (all arms but the target).
struct ReducedSnr {
    std::vector<Eigen::Index> free;
    FreeVector r;
    FreeMatrix q;

    explicit ReducedSnr(const SnrProblem& problem) {
        const auto k = static_cast<Eigen::Index>(problem.num_arms());
        const auto a = static_cast<Eigen::Index>(problem.target);
        for (Eigen::Index b = 0; b < k; ++b)
            if (b != a) free.push_back(b);
        const auto n = static_cast<Eigen::Index>(free.size());
        r.resize(n);
        q.resize(n, n);
        const auto& d = problem.denom;
        for (Eigen::Index i = 0; i < n; ++i) {
            r[i] = problem.mu[free[i]] - problem.mu[a];
            for (Eigen::Index j = 0; j < n; ++j)
                q(i, j) = d(free[i], free[j]) - d(free[i], a) - d(a, free[j]) + d(a, a);
        }
        q = 0.5 * (q + q.transpose()).eval();
    }

    Eigen::Index size() const { return static_cast<Eigen::Index>(free.size()); }

    double quad(const FreeVector& p) const { return p.dot(q * p); }

    std::optional<double> value(const FreeVector& p) const {
        const double s = quad(p);
        if (!(s > kDegenerateVariance)) return std::nullopt;
        return r.dot(p) / std::sqrt(s);
    }

    WeightVector expand(const FreeVector& p, std::size_t target, Eigen::Index k) const {
        WeightVector out;
        out.arm = target;
        out.w = ArmVector::Zero(k);
        out.w[static_cast<Eigen::Index>(target)] = -1.0;
        for (Eigen::Index i = 0; i < size(); ++i) out.w[free[i]] = p[i];
        return out;
    }

    FreeVector contract(const WeightVector& w) const {
        FreeVector p(size());
        for (Eigen::Index i = 0; i < size(); ++i) p[i] = std::max(0.0, w.w[free[i]]);
        return p;
    }
};

}  // namespace detail

// Euclidean projection onto the probability simplex (sort-based).
template <class Vec>
Vec project_simplex(const Vec& v) {
    const Eigen::Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double tau = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        cumsum += u[static_cast<std::size_t>(j)];
        const double cand = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[static_cast<std::size_t>(j)] - cand > 0.0) tau = cand;
    }
    Vec out(n);
    for (Eigen::Index j = 0; j < n; ++j) out[j] = std::max(0.0, v[j] - tau);
    const double s = out.sum();
    if (s > 0.0) out /= s;
    return out;
}

namespace detail {

// Exact optimum restricted to the face with the given support: p_S proportional
// to Q_S^{-1} r_S. Returns nullopt if Q_S is singular or the point leaves the face.
inline std::optional<FreeVector> face_optimum(const ReducedSnr& red, const std::vector<Eigen::Index>& support) {
    const auto m = static_cast<Eigen::Index>(support.size());
    FreeMatrix qs(m, m);
    FreeVector rs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        rs[i] = red.r[support[i]];
        for (Eigen::Index j = 0; j < m; ++j) qs(i, j) = red.q(support[i], support[j]);
    }
    Eigen::LLT<FreeMatrix> llt(qs);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const FreeVector z = llt.solve(rs);
    if (!z.allFinite() || rs.dot(z) <= 0.0) return std::nullopt;
    if ((z.array() <= 0.0).any()) return std::nullopt;
    FreeVector p = FreeVector::Zero(red.size());
    const double total = z.sum();
    for (Eigen::Index i = 0; i < m; ++i) p[support[i]] = z[i] / total;
    return p;
}

// maximise r^T p - lambda sqrt(p^T Q p) over the simplex by projected gradient
// ascent with backtracking, starting from p.
inline FreeVector dinkelbach_inner(const ReducedSnr& red, FreeVector p, double lambda, const SnrOptions& opts) {
    auto objective = [&](const FreeVector& x) { return red.r.dot(x) - lambda * std::sqrt(std::max(red.quad(x), 0.0)); };
    const double qnorm = red.q.cwiseAbs().rowwise().sum().maxCoeff();
    double s0 = std::sqrt(std::max(red.quad(p), kDegenerateVariance));
    double step = s0 / std::max(lambda * qnorm, 1e-300);
    double h = objective(p);
    for (int it = 0; it < opts.max_inner_iterations; ++it) {
        const double s = std::sqrt(std::max(red.quad(p), kDegenerateVariance));
        const FreeVector grad = red.r - (lambda / s) * (red.q * p);
        FreeVector next;
        double h_next = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            next = project_simplex<FreeVector>(p + step * grad);
            const FreeVector diff = next - p;
            h_next = objective(next);
            if (h_next >= h + grad.dot(diff) - diff.squaredNorm() / (2.0 * step) - 1e-15 * std::abs(h)) break;
            step *= 0.5;
        }
        const double move = (next - p).lpNorm<Eigen::Infinity>();
        if (h_next < h) break;
        p = next;
        h = h_next;
        if (move < opts.inner_tolerance) break;
        step *= 2.0;
    }
    return p;
}

inline SnrSolution finish(const ReducedSnr& red, const SnrProblem& problem, const FreeVector& p, double value,
                          int iterations, std::vector<double> trace) {
    SnrSolution sol;
    sol.weight = red.expand(p, problem.target, static_cast<Eigen::Index>(problem.num_arms()));
    sol.value = value;
    sol.outer_iterations = iterations;
    sol.trace = std::move(trace);
    return sol;
}

inline SnrSolution solve_dinkelbach(const ReducedSnr& red, const SnrProblem& problem, const SnrOptions& opts,
                                    const WeightVector* warm) {
    const Eigen::Index n = red.size();
    FreeVector p = FreeVector::Constant(n, 1.0 / static_cast<double>(n));
    if (warm && warm->arm == problem.target && warm->w.size() == static_cast<Eigen::Index>(problem.num_arms())) {
        FreeVector cand = red.contract(*warm);
        if (cand.sum() > 0.0) {
            cand /= cand.sum();
            // keep a little mass everywhere so the ascent can re-enter dropped faces
            cand = 0.999 * cand + FreeVector::Constant(n, 0.001 / static_cast<double>(n));
            if (red.r.dot(cand) > 0.0) p = cand;
        }
    }
    if (red.r.dot(p) <= 0.0) {
        Eigen::Index best = 0;
        red.r.maxCoeff(&best);
        p.setZero();
        p[best] = 1.0;
    }
    auto v0 = red.value(p);
    if (!v0) {
        SnrSolution sol;
        sol.status = SnrStatus::degenerate_variance;
        return sol;
    }
    double lambda = *v0;
    std::vector<double> trace;
    if (opts.record_trace) trace.push_back(lambda);
    int outer = 0;
    for (; outer < opts.max_outer_iterations; ++outer) {
        const FreeVector cand = dinkelbach_inner(red, p, lambda, opts);
        const auto v = red.value(cand);
        if (!v) {
            SnrSolution sol;
            sol.status = SnrStatus::degenerate_variance;
            return sol;
        }
        if (*v <= lambda) break;
        const double rel = (*v - lambda) / std::abs(lambda);
        p = cand;
        lambda = *v;
        if (opts.record_trace) trace.push_back(lambda);
        if (rel < opts.relative_tolerance) break;
    }
    // Polish on the identified face; accepted only if it does not lose objective.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < n; ++i)
        if (p[i] > 1e-10) support.push_back(i);
    if (auto face = face_optimum(red, support)) {
        const auto v = red.value(*face);
        if (v && *v >= lambda) {
            p = *face;
            lambda = *v;
            if (opts.record_trace) trace.push_back(lambda);
        }
    }
    return finish(red, problem, p, lambda, outer + 1, std::move(trace));
}

inline SnrSolution solve_active_set(const ReducedSnr& red, const SnrProblem& problem) {
    const Eigen::Index n = red.size();
    if (n > 12) throw std::invalid_argument("active-set SNR solver supports at most 13 arms");
    std::optional<FreeVector> best;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<Eigen::Index> support;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        support.clear();
        for (Eigen::Index i = 0; i < n; ++i)
            if (mask & (1u << i)) support.push_back(i);
        auto p = face_optimum(red, support);
        if (!p) continue;
        const auto v = red.value(*p);
        if (v && *v > best_value) {
            best_value = *v;
            best = p;
        }
    }
    if (!best) {
        SnrSolution sol;
        sol.status = SnrStatus::degenerate_variance;
        return sol;
    }
    return finish(red, problem, *best, best_value, 1, {});
}

}  // namespace detail

// Maximises the SNR over Delta(target). Preconditions (target not an argmax of
// mu, positive diagonal of D) are reported through the status, never thrown;
// callers then fall back to the default weight.
inline SnrSolution solve_snr(const SnrProblem& problem, const SnrOptions& opts = {},
                             const WeightVector* warm = nullptr) {
    const std::size_t k = problem.num_arms();
    if (k < 2 || problem.target >= k) throw std::invalid_argument("solve_snr: bad problem dimensions");
    if (problem.denom.rows() != problem.mu.size() || problem.denom.cols() != problem.mu.size())
        throw std::invalid_argument("solve_snr: denominator must be K x K");
    const detail::ReducedSnr red(problem);
    SnrSolution fail;
    fail.weight = default_weight(k, problem.target);
    if ((red.r.array() <= 0.0).all()) {
        fail.status = SnrStatus::no_positive_direction;
        return fail;
    }
    if (!(problem.denom.diagonal().minCoeff() > 0.0)) {
        fail.status = SnrStatus::degenerate_variance;
        return fail;
    }
    if (k == 2) {
        const detail::FreeVector p = detail::FreeVector::Ones(1);
        const auto v = red.value(p);
        if (!v) {
            fail.status = SnrStatus::degenerate_variance;
            return fail;
        }
        return detail::finish(red, problem, p, *v, 0, {});
    }
    SnrSolution sol = opts.method == SnrMethod::active_set ? detail::solve_active_set(red, problem)
                                                           : detail::solve_dinkelbach(red, problem, opts, warm);
    if (!sol.ok()) {
        fail.status = sol.status;
        return fail;
    }
    return sol;
}

// Exhaustive search over the simplex grid with spacing `resolution` (K <= 5).
inline SnrSolution grid_oracle_snr(const SnrProblem& problem, double resolution) {
    const std::size_t k = problem.num_arms();
    if (k < 2 || problem.target >= k) throw std::invalid_argument("grid_oracle_snr: bad problem dimensions");
    if (k > 5) throw std::invalid_argument("grid_oracle_snr: K > 5 is combinatorially infeasible");
    if (!(resolution > 0.0 && resolution <= 1.0)) throw std::invalid_argument("grid_oracle_snr: bad resolution");
    const detail::ReducedSnr red(problem);
    const auto n = red.size();
    const int steps = std::max(1, static_cast<int>(std::lround(1.0 / resolution)));
    detail::FreeVector p = detail::FreeVector::Zero(n);
    detail::FreeVector best = p;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    // Enumerate compositions of `steps` into n parts.
    auto visit = [&](auto&& self, Eigen::Index i, int remaining) -> void {
        if (i == n - 1) {
            counts[static_cast<std::size_t>(i)] = remaining;
            for (Eigen::Index j = 0; j < n; ++j) p[j] = counts[static_cast<std::size_t>(j)] / static_cast<double>(steps);
            const auto v = red.value(p);
            if (v && *v > best_value) {
                best_value = *v;
                best = p;
            }
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            counts[static_cast<std::size_t>(i)] = c;
            self(self, i + 1, remaining - c);
        }
    };
    visit(visit, 0, steps);
    SnrSolution sol = detail::finish(red, problem, best, best_value, 0, {});
    if (!std::isfinite(best_value)) sol.status = SnrStatus::degenerate_variance;
    return sol;
}

// ------------------------------------------------------- Gaussian KL projection

struct KlProjection {
    double value = 0.0;
    ArmVector point;
    int iterations = 0;
};

// Euclidean projection onto {x : x(a) >= x(b) for all b}: x(a) is pooled with
// the largest competitors until none exceeds the pooled value.
inline ArmVector project_arm_best(const ArmVector& x, std::size_t a) {
    const auto ai = static_cast<Eigen::Index>(a);
    std::vector<double> others;
    for (Eigen::Index b = 0; b < x.size(); ++b)
        if (b != ai) others.push_back(x[b]);
    std::sort(others.begin(), others.end(), std::greater<>());
    double sum = x[ai];
    double level = x[ai];
    std::size_t pooled = 1;
    for (double y : others) {
        if (y <= level) break;
        sum += y;
        ++pooled;
        level = sum / static_cast<double>(pooled);
    }
    ArmVector out = x.cwiseMin(level);
    out[ai] = level;
    return out;
}

// inf over mu~ with arm a best of  sum_b pi(b) (mu(b) - mu~(b))^2 / (2 sigma^2(b)),
// by projected gradient descent.
inline KlProjection kl_projection(const ArmVector& mu, const ArmVector& sigma2, const ArmVector& pi, std::size_t a,
                                  double tolerance = 1e-10, int max_iterations = 2000000) {
    const Eigen::Index k = mu.size();
    if (sigma2.size() != k || pi.size() != k || a >= static_cast<std::size_t>(k))
        throw std::invalid_argument("kl_projection: dimension mismatch");
    if ((sigma2.array() <= 0.0).any() || (pi.array() <= 0.0).any())
        throw std::invalid_argument("kl_projection: sigma2 and pi must be strictly positive");
    const ArmVector curvature = pi.cwiseQuotient(sigma2);
    const double step = 1.0 / curvature.maxCoeff();
    auto objective = [&](const ArmVector& x) { return 0.5 * (curvature.array() * (mu - x).array().square()).sum(); };
    KlProjection out;
    out.point = project_arm_best(mu, a);
    double f = objective(out.point);
    const double scale = std::max(1.0, mu.cwiseAbs().maxCoeff());
    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        const ArmVector grad = curvature.cwiseProduct(out.point - mu);
        const ArmVector next = project_arm_best(out.point - step * grad, a);
        const double f_next = objective(next);
        const double move = (next - out.point).lpNorm<Eigen::Infinity>();
        out.point = next;
        if (f - f_next <= tolerance * 1e-6 * std::max(f, 1e-300) && move <= 1e-14 * scale) {
            f = f_next;
            break;
        }
        f = f_next;
        if (move <= 1e-15 * scale) break;
    }
    out.value = f;
    return out;
}

inline double kl_projection_value(const ArmVector& mu, const ArmVector& sigma2, const ArmVector& pi, std::size_t a) {
    return kl_projection(mu, sigma2, pi, a).value;
}

}  // namespace avbai
