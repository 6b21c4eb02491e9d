#pragma once

// Contextual sampling policy pi_theta(x, b) proportional to sqrt(V(x, b)) exp(theta(b)),
// the empirical objective G_t(theta) = max_a F_a(theta) over apparently
// suboptimal arms, and projected subgradient descent in theta. Also the
// population constants Gamma_1, Gamma_2 and the two-armed closed forms.

#include "avbai/env.hpp"
#include "avbai/regress.hpp"
#include "avbai/scorekit.hpp"
#include "avbai/snr.hpp"
#include "avbai/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace avbai {

enum class PolicyMode { contextual, noncontext, uniform };

inline std::string to_string(PolicyMode m) {
    switch (m) {
        case PolicyMode::contextual: return "contextual";
        case PolicyMode::noncontext: return "noncontext";
        case PolicyMode::uniform: return "uniform";
    }
    return "unknown";
}

inline PolicyMode parse_mode(const std::string& s) {
    if (s == "contextual") return PolicyMode::contextual;
    if (s == "noncontext" || s == "non-contextual" || s == "noncontextual") return PolicyMode::noncontext;
    if (s == "uniform") return PolicyMode::uniform;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

inline constexpr double kExponentClamp = 500.0;

struct PolicyConfig {
    double box_radius = 100.0;
    double variance_floor = 0.01;
    double variance_cap = 1.0;
    double active_tolerance = 1e-8;
    // Overrides N(t) when set (validation runs use a fixed count).
    std::optional<int> fixed_iterations;
    PolicyMode mode = PolicyMode::contextual;
    SnrOptions snr;

    void validate() const {
        if (!(box_radius >= 0.0)) throw std::invalid_argument("box radius S must be >= 0");
        if (!(variance_floor > 0.0)) throw std::invalid_argument("variance floor must be > 0");
        if (!(variance_cap >= variance_floor)) throw std::invalid_argument("variance cap must be >= floor");
        if (!(active_tolerance >= 0.0)) throw std::invalid_argument("active-set tolerance must be >= 0");
    }
};

// N(t) = ceil(10 + ln(t + 1)).
inline int descent_iterations(std::size_t t) {
    return static_cast<int>(std::ceil(10.0 + std::log(static_cast<double>(t) + 1.0)));
}

inline ArmVector zero_theta(std::size_t num_arms) { return ArmVector::Zero(static_cast<Eigen::Index>(num_arms)); }

// Box projection; the last coordinate is pinned at 0.
inline ArmVector project_theta(ArmVector theta, double radius) {
    theta = theta.cwiseMax(-radius).cwiseMin(radius);
    theta[theta.size() - 1] = 0.0;
    return theta;
}

inline double clamped_exp(double z) { return std::exp(std::clamp(z, -kExponentClamp, kExponentClamp)); }

// pi(b) = 1 / sum_a sqrt(V(a)/V(b)) exp(theta(a) - theta(b)), evaluated as a
// softmax of 0.5 log V(b) + theta(b).
inline ArmVector policy_from_theta(const ArmVector& variances, const ArmVector& theta) {
    if (variances.size() != theta.size()) throw std::invalid_argument("policy_from_theta: dimension mismatch");
    if ((variances.array() <= 0.0).any()) throw std::invalid_argument("policy_from_theta: variances must be > 0");
    const ArmVector z = 0.5 * variances.array().log().matrix() + theta;
    const double top = z.maxCoeff();
    ArmVector pi(z.size());
    for (Eigen::Index b = 0; b < z.size(); ++b) pi[b] = clamped_exp(z[b] - top);
    return pi / pi.sum();
}

inline ArmVector policy_from_theta(const VarianceModel& model, const ArmVector& theta, const Context& x) {
    return policy_from_theta(predict_variances(model, x), theta);
}

// What G_t needs from the history: mu_hat, S_bar and the centred prediction Gram.
struct PolicyInputs {
    ArmVector mu;
    ArmMatrix vgeo;
    ArmMatrix centred_pred;

    std::size_t num_arms() const { return static_cast<std::size_t>(mu.size()); }

    static PolicyInputs from_stats(const RunningStats& stats) {
        return {stats.mu, stats.vgeo, stats.centered_pred_gram(stats.mu)};
    }
};

// E(theta)_bb = sum_a S_bar(a, b) exp(theta(a) - theta(b)).
inline ArmVector exposure_diagonal(const PolicyInputs& in, const ArmVector& theta) {
    const Eigen::Index k = in.mu.size();
    ArmVector e(k);
    for (Eigen::Index b = 0; b < k; ++b) {
        double s = 0.0;
        for (Eigen::Index a = 0; a < k; ++a) s += in.vgeo(a, b) * clamped_exp(theta[a] - theta[b]);
        e[b] = s;
    }
    return e;
}

inline ArmMatrix policy_denominator(const PolicyInputs& in, const ArmVector& theta) {
    ArmMatrix d = in.centred_pred;
    d.diagonal() += exposure_diagonal(in, theta);
    return d;
}

// f_t(theta, w) = w^T (E(theta) + L~) w / (w^T mu)^2.
inline std::optional<double> empirical_f(const ArmVector& theta, const ArmVector& w, const PolicyInputs& in) {
    const double signal = w.dot(in.mu);
    if (signal == 0.0) return std::nullopt;
    const ArmVector e = exposure_diagonal(in, theta);
    const double num = (w.array().square() * e.array()).sum() + w.dot(in.centred_pred * w);
    return num / (signal * signal);
}

// Partial derivatives in theta(0..K-2) with w held fixed (the envelope gradient).
inline Eigen::VectorXd gradient_f(const ArmVector& theta, const ArmVector& w, const PolicyInputs& in) {
    const Eigen::Index k = in.mu.size();
    const double signal = w.dot(in.mu);
    if (signal == 0.0) throw std::domain_error("gradient_f: w^T mu = 0");
    const double inv = 1.0 / (signal * signal);
    Eigen::VectorXd g(k - 1);
    for (Eigen::Index c = 0; c + 1 < k; ++c) {
        double s = 0.0;
        for (Eigen::Index b = 0; b < k; ++b) {
            if (b == c) continue;
            s += in.vgeo(b, c) *
                 (w[b] * w[b] * clamped_exp(theta[c] - theta[b]) - w[c] * w[c] * clamped_exp(theta[b] - theta[c]));
        }
        g[c] = s * inv;
    }
    return g;
}

inline SnrSolution inner_weight(const ArmVector& theta, std::size_t a, const PolicyInputs& in,
                                const SnrOptions& opts = {}, const WeightVector* warm = nullptr) {
    SnrProblem problem{in.mu, policy_denominator(in, theta), a};
    return solve_snr(problem, opts, warm);
}

inline std::vector<std::size_t> apparently_suboptimal(const ArmVector& mu) {
    const double top = mu.maxCoeff();
    std::vector<std::size_t> out;
    for (Eigen::Index a = 0; a < mu.size(); ++a)
        if (mu[a] < top) out.push_back(static_cast<std::size_t>(a));
    return out;
}

struct ObjectiveEval {
    double value = std::numeric_limits<double>::quiet_NaN();  // G_t(theta)
    std::vector<std::size_t> arms;                             // arms with a solved inner weight
    std::vector<double> per_arm;                               // F_a(theta)
    std::vector<WeightVector> weights;
    std::vector<std::size_t> active;

    bool ok() const { return !arms.empty(); }
};

// warm: per-arm weights indexed by arm (may be empty); updated in place.
inline ObjectiveEval evaluate_objective(const ArmVector& theta, const PolicyInputs& in, const PolicyConfig& cfg,
                                        std::vector<WeightVector>* warm = nullptr) {
    ObjectiveEval ev;
    for (std::size_t a : apparently_suboptimal(in.mu)) {
        const WeightVector* start = (warm && a < warm->size()) ? &(*warm)[a] : nullptr;
        SnrSolution sol = inner_weight(theta, a, in, cfg.snr, start);
        if (!sol.ok() || !(sol.value > 0.0)) continue;
        if (warm && a < warm->size()) (*warm)[a] = sol.weight;
        ev.arms.push_back(a);
        ev.per_arm.push_back(1.0 / (sol.value * sol.value));
        ev.weights.push_back(std::move(sol.weight));
    }
    if (ev.arms.empty()) return ev;
    ev.value = *std::max_element(ev.per_arm.begin(), ev.per_arm.end());
    for (std::size_t i = 0; i < ev.arms.size(); ++i)
        if (ev.per_arm[i] >= ev.value * (1.0 - cfg.active_tolerance)) ev.active.push_back(i);
    return ev;
}

struct PsgdResult {
    ArmVector theta;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    std::vector<double> best_trace;  // best-so-far G after each iterate
};

inline PsgdResult psgd(const PolicyInputs& in, const PolicyConfig& cfg, const ArmVector& theta0, int iterations,
                       std::vector<WeightVector>* warm = nullptr) {
    const Eigen::Index k = in.mu.size();
    PsgdResult out;
    out.theta = project_theta(theta0, cfg.box_radius);
    if (iterations <= 0 || apparently_suboptimal(in.mu).empty()) return out;
    std::vector<WeightVector> local;
    if (!warm) {
        for (std::size_t a = 0; a < in.num_arms(); ++a) local.push_back(default_weight(in.num_arms(), a));
        warm = &local;
    }
    ArmVector theta = out.theta;
    for (int n = 1; n <= iterations; ++n) {
        const ObjectiveEval ev = evaluate_objective(theta, in, cfg, warm);
        out.iterations = n;
        if (!ev.ok()) break;
        if (!(ev.value >= out.objective)) {  // also true while objective is NaN
            out.objective = ev.value;
            out.theta = theta;
        }
        out.best_trace.push_back(out.objective);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(k - 1);
        for (std::size_t i : ev.active) d += gradient_f(theta, ev.weights[i].w, in);
        d /= static_cast<double>(ev.active.size());
        const double norm = d.norm();
        if (!(norm > 0.0)) break;
        ArmVector next = theta;
        next.head(k - 1) -= d / (static_cast<double>(n) * norm);
        theta = project_theta(next, cfg.box_radius);
    }
    return out;
}

// ------------------------------------------------------------------ oracles

inline std::size_t unique_best(const ArmVector& mu) {
    Eigen::Index best = 0;
    const double top = mu.maxCoeff(&best);
    for (Eigen::Index a = 0; a < mu.size(); ++a)
        if (a != best && mu[a] == top) throw std::invalid_argument("best arm is not unique");
    return static_cast<std::size_t>(best);
}

struct Gamma1Result {
    double value = 0.0;  // (min_a SNR_a)^-2
    std::vector<double> snr;

    double bound(double alpha) const { return 2.0 * value * std::log(1.0 / alpha); }
};

// denominators[a] is the limiting D for arm a's test (ignored for the best arm).
inline Gamma1Result gamma1(const ArmVector& mu, const std::vector<ArmMatrix>& denominators,
                           const SnrOptions& opts = {}) {
    const std::size_t best = unique_best(mu);
    if (denominators.size() != static_cast<std::size_t>(mu.size()))
        throw std::invalid_argument("gamma1: need one denominator per arm");
    Gamma1Result out;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < denominators.size(); ++a) {
        if (a == best) {
            out.snr.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const SnrSolution sol = solve_snr({mu, denominators[a], a}, opts);
        if (!sol.ok()) throw std::domain_error("gamma1: degenerate oracle SNR problem");
        out.snr.push_back(sol.value);
        worst = std::min(worst, sol.value);
    }
    out.value = 1.0 / (worst * worst);
    return out;
}

inline Gamma1Result gamma1(const ArmVector& mu, const ArmMatrix& denominator, const SnrOptions& opts = {}) {
    return gamma1(mu, std::vector<ArmMatrix>(static_cast<std::size_t>(mu.size()), denominator), opts);
}

struct Gamma2Result {
    double value = 0.0;
    ArmVector allocation;
};

namespace detail {

// For a fixed share p_best of the best arm, the allocation that equalises the
// pairwise Gaussian divergences and the common value v it attains.
inline double gamma2_equalised(const ArmVector& mu, const ArmVector& sigma2, std::size_t best, double p_best,
                               ArmVector* allocation) {
    const Eigen::Index k = mu.size();
    const auto bi = static_cast<Eigen::Index>(best);
    const double base = sigma2[bi] / p_best;
    double v_hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < k; ++a)
        if (a != bi) v_hi = std::min(v_hi, (mu[bi] - mu[a]) * (mu[bi] - mu[a]) / (2.0 * base));
    auto shares = [&](double v, ArmVector& p) {
        p.resize(k);
        p[bi] = p_best;
        double sum = 0.0;
        for (Eigen::Index a = 0; a < k; ++a) {
            if (a == bi) continue;
            const double gap2 = (mu[bi] - mu[a]) * (mu[bi] - mu[a]);
            const double denom = gap2 / (2.0 * v) - base;
            p[a] = denom > 0.0 ? sigma2[a] / denom : std::numeric_limits<double>::infinity();
            sum += p[a];
        }
        return sum;
    };
    ArmVector p;
    double lo = 0.0, hi = v_hi;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * v_hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (shares(mid, p) > 1.0 - p_best) hi = mid;
        else lo = mid;
    }
    shares(lo, p);
    if (allocation) *allocation = p;
    return lo;
}

}  // namespace detail

// Gamma_2 = (sup_pi min_{a != a*} inf_{mu~ : a beats a*} sum_b pi(b) d(mu(b), mu~(b)))^-1
// with Gaussian divergences. Golden-section search on the best arm's share,
// equalising the pairwise values inside.
inline Gamma2Result gamma2(const ArmVector& mu, const ArmVector& sigma2) {
    const std::size_t best = unique_best(mu);
    if (sigma2.size() != mu.size() || (sigma2.array() <= 0.0).any())
        throw std::invalid_argument("gamma2: sigma2 must be positive, one per arm");
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = 0.0, hi = 1.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = detail::gamma2_equalised(mu, sigma2, best, x1, nullptr);
    double f2 = detail::gamma2_equalised(mu, sigma2, best, x2, nullptr);
    while (hi - lo > 1e-11) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = detail::gamma2_equalised(mu, sigma2, best, x2, nullptr);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = detail::gamma2_equalised(mu, sigma2, best, x1, nullptr);
        }
    }
    Gamma2Result out;
    const double v = detail::gamma2_equalised(mu, sigma2, best, 0.5 * (lo + hi), &out.allocation);
    out.allocation /= out.allocation.sum();
    out.value = 1.0 / v;
    return out;
}

// Population value of the max-min divergence for a given allocation, via the
// KL projection (used to cross-check gamma2).
inline double divergence_value(const ArmVector& mu, const ArmVector& sigma2, const ArmVector& pi) {
    const std::size_t best = unique_best(mu);
    double v = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < static_cast<std::size_t>(mu.size()); ++a)
        if (a != best) v = std::min(v, kl_projection_value(mu, sigma2, pi, a));
    return v;
}

// --------------------------------------------------------- two-armed limits

struct TwoArmedModel {
    std::function<Context(std::mt19937_64&)> sample_context;
    std::function<double(const Context&, std::size_t)> mean;      // g(x, a)
    std::function<double(const Context&, std::size_t)> variance;  // v(x, a)
    double mu[2] = {0.0, 0.0};
};

inline TwoArmedModel two_armed_model(const BanditInstance& inst) {
    if (inst.num_arms != 2) throw std::invalid_argument("two-armed limits need K = 2");
    TwoArmedModel m;
    m.sample_context = [inst](std::mt19937_64& rng) { return sample_context(inst, rng); };
    m.mean = [inst](const Context& x, std::size_t a) { return true_conditional_mean(inst, x, a); };
    m.variance = [inst](const Context& x, std::size_t a) { return true_conditional_variance(inst, x, a); };
    m.mu[0] = true_arm_mean(inst, 0);
    m.mu[1] = true_arm_mean(inst, 1);
    return m;
}

struct TwoArmedLimits {
    double gamma2 = 0.0;
    double standard_error = 0.0;
    bool strict_improvement = false;  // (g1 - mu1)(g2 - mu2) < 0 seen on some draw
    std::size_t draws = 0;
};

// pi_inf(x, a) = sqrt v(x, a) / (sqrt v(x, 1) + sqrt v(x, 2)).
inline double two_armed_policy(const TwoArmedModel& m, const Context& x, std::size_t a) {
    if (a > 1) throw std::out_of_range("two-armed policy: arm must be 0 or 1");
    const double s0 = std::sqrt(m.variance(x, 0));
    const double s1 = std::sqrt(m.variance(x, 1));
    return (a == 0 ? s0 : s1) / (s0 + s1);
}

// Gamma_2 = 2 (E[(sqrt v1 + sqrt v2)^2] + E[((g1 - mu1) - (g2 - mu2))^2]) / (mu1 - mu2)^2
// by Monte Carlo over contexts.
inline TwoArmedLimits two_armed_limits(const TwoArmedModel& m, std::size_t draws, std::uint64_t seed) {
    if (draws < 2) throw std::invalid_argument("two-armed limits need at least two draws");
    std::mt19937_64 rng(seed);
    const double gap = m.mu[0] - m.mu[1];
    if (gap == 0.0) throw std::invalid_argument("two-armed limits need distinct means");
    double mean = 0.0, m2 = 0.0;
    TwoArmedLimits out;
    for (std::size_t i = 0; i < draws; ++i) {
        const Context x = m.sample_context(rng);
        const double r = std::sqrt(m.variance(x, 0)) + std::sqrt(m.variance(x, 1));
        const double e0 = m.mean(x, 0) - m.mu[0];
        const double e1 = m.mean(x, 1) - m.mu[1];
        if (e0 * e1 < 0.0) out.strict_improvement = true;
        const double z = r * r + (e0 - e1) * (e0 - e1);
        const double delta = z - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (z - mean);
    }
    const double sd = std::sqrt(m2 / static_cast<double>(draws - 1));
    out.draws = draws;
    out.gamma2 = 2.0 * mean / (gap * gap);
    out.standard_error = 2.0 * sd / std::sqrt(static_cast<double>(draws)) / (gap * gap);
    return out;
}

// Population stand-ins for the running statistics under the true g and v
// (truncated to [floor, cap] as the learner would see them), by Monte Carlo.
inline PolicyInputs population_inputs(const BanditInstance& inst, double floor, double cap, std::size_t draws,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto k = static_cast<Eigen::Index>(inst.num_arms);
    ArmVector h_mean = ArmVector::Zero(k);
    ArmMatrix h_gram = ArmMatrix::Zero(k, k), vgeo = ArmMatrix::Zero(k, k);
    ArmVector h(k), root(k);
    for (std::size_t i = 0; i < draws; ++i) {
        const Context x = sample_context(inst, rng);
        for (Eigen::Index a = 0; a < k; ++a) {
            h[a] = true_conditional_mean(inst, x, static_cast<std::size_t>(a));
            root[a] = std::sqrt(std::clamp(true_conditional_variance(inst, x, static_cast<std::size_t>(a)), floor, cap));
        }
        h_mean += h;
        h_gram += h * h.transpose();
        vgeo += root * root.transpose();
    }
    const double n = static_cast<double>(draws);
    h_mean /= n;
    h_gram /= n;
    vgeo /= n;
    PolicyInputs in;
    in.mu = true_arm_means(inst);
    in.vgeo = vgeo;
    in.centred_pred = h_gram - h_mean * in.mu.transpose() - in.mu * h_mean.transpose() + in.mu * in.mu.transpose();
    in.centred_pred = 0.5 * (in.centred_pred + in.centred_pred.transpose()).eval();
    return in;
}

}  // namespace avbai
