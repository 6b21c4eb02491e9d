#pragma once

// Synthetic contextual bandit environments: isotropic normal contexts and a
// probit link c(a) + sum_i x(i) driving Bernoulli or Beta(p, 1 - p) outcomes.

#include "avbai/normal.hpp"
#include "avbai/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace avbai {

enum class OutcomeFamily { bernoulli_probit, beta_probit, noncontextual_bernoulli };

inline std::string to_string(OutcomeFamily f) {
    switch (f) {
        case OutcomeFamily::bernoulli_probit: return "bernoulli";
        case OutcomeFamily::beta_probit: return "beta";
        case OutcomeFamily::noncontextual_bernoulli: return "noncontextual-bernoulli";
    }
    return "unknown";
}

inline OutcomeFamily parse_family(const std::string& s) {
    if (s == "bernoulli") return OutcomeFamily::bernoulli_probit;
    if (s == "beta") return OutcomeFamily::beta_probit;
    if (s == "noncontextual-bernoulli") return OutcomeFamily::noncontextual_bernoulli;
    throw std::invalid_argument("unknown outcome family '" + s + "'");
}

struct BanditInstance {
    std::size_t num_arms = 0;
    std::size_t context_dim = 0;
    std::vector<double> link_constants;
    OutcomeFamily family = OutcomeFamily::bernoulli_probit;
    double context_scale = 1.0;
    // Latent probability is clipped to [margin, 1 - margin] before the Beta
    // parameterization so both shape parameters stay positive.
    double beta_margin = 1e-6;

    void validate() const {
        if (num_arms < 2) throw std::invalid_argument("instance needs at least two arms");
        if (num_arms > static_cast<std::size_t>(kMaxArms))
            throw std::invalid_argument("instance exceeds kMaxArms");
        if (link_constants.size() != num_arms)
            throw std::invalid_argument("link_constants must have one entry per arm");
        if (family == OutcomeFamily::noncontextual_bernoulli && context_dim != 0)
            throw std::invalid_argument("noncontextual-bernoulli requires context_dim = 0");
        if (!(context_scale > 0.0)) throw std::invalid_argument("context_scale must be positive");
        if (!(beta_margin > 0.0 && beta_margin < 0.5))
            throw std::invalid_argument("beta_margin must lie in (0, 0.5)");
    }
};

inline BanditInstance make_instance(OutcomeFamily family, std::vector<double> link_constants,
                                    std::size_t context_dim, double context_scale = 1.0) {
    BanditInstance inst;
    inst.num_arms = link_constants.size();
    inst.context_dim = context_dim;
    inst.link_constants = std::move(link_constants);
    inst.family = family;
    inst.context_scale = context_scale;
    inst.validate();
    return inst;
}

template <class Rng>
Context sample_context(const BanditInstance& inst, Rng& rng) {
    std::normal_distribution<double> z(0.0, inst.context_scale);
    Context x(static_cast<Eigen::Index>(inst.context_dim));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = z(rng);
    return x;
}

// Probit latent probability Phi(c(a) + sum_i x(i)).
inline double latent_probability(const BanditInstance& inst, const Context& x, std::size_t a) {
    if (a >= inst.num_arms) throw std::out_of_range("arm index out of range");
    return normal::cdf(inst.link_constants[a] + x.sum());
}

// g(x, a). Beta(p, 1 - p) has mean p, so both families share the link.
inline double true_conditional_mean(const BanditInstance& inst, const Context& x, std::size_t a) {
    return latent_probability(inst, x, a);
}

// v(x, a): p(1 - p) for Bernoulli, p(1 - p) / 2 for Beta(p, 1 - p).
inline double true_conditional_variance(const BanditInstance& inst, const Context& x, std::size_t a) {
    const double p = latent_probability(inst, x, a);
    if (inst.family == OutcomeFamily::beta_probit) {
        const double q = std::clamp(p, inst.beta_margin, 1.0 - inst.beta_margin);
        return 0.5 * q * (1.0 - q);
    }
    return p * (1.0 - p);
}

// mu(a) = E[Phi(c + Z)], Z ~ N(0, d s^2)  =  Phi(c / sqrt(1 + d s^2)).
inline double true_arm_mean(const BanditInstance& inst, std::size_t a) {
    if (a >= inst.num_arms) throw std::out_of_range("arm index out of range");
    const double var = static_cast<double>(inst.context_dim) * inst.context_scale * inst.context_scale;
    return normal::cdf(inst.link_constants[a] / std::sqrt(1.0 + var));
}

inline ArmVector true_arm_means(const BanditInstance& inst) {
    ArmVector mu(static_cast<Eigen::Index>(inst.num_arms));
    for (std::size_t a = 0; a < inst.num_arms; ++a) mu[static_cast<Eigen::Index>(a)] = true_arm_mean(inst, a);
    return mu;
}

inline std::size_t best_arm(const BanditInstance& inst) {
    Eigen::Index best = 0;
    true_arm_means(inst).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

namespace detail {

// log of a Gamma(shape, 1) draw; shape < 1 uses the Gamma(shape + 1) * U^(1/shape)
// boost in log space so tiny shapes do not underflow to zero.
template <class Rng>
double sample_log_gamma(double shape, Rng& rng) {
    if (shape >= 1.0) {
        std::gamma_distribution<double> g(shape, 1.0);
        return std::log(g(rng));
    }
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double uu = u(rng);
    while (uu <= 0.0) uu = u(rng);
    return std::log(g(rng)) + std::log(uu) / shape;
}

template <class Rng>
double sample_beta(double a, double b, Rng& rng) {
    const double la = sample_log_gamma(a, rng);
    const double lb = sample_log_gamma(b, rng);
    return 1.0 / (1.0 + std::exp(lb - la));
}

}  // namespace detail

template <class Rng>
double sample_outcome(const BanditInstance& inst, const Context& x, std::size_t a, Rng& rng) {
    const double p = latent_probability(inst, x, a);
    if (inst.family == OutcomeFamily::beta_probit) {
        const double q = std::clamp(p, inst.beta_margin, 1.0 - inst.beta_margin);
        return detail::sample_beta(q, 1.0 - q, rng);
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < p ? 1.0 : 0.0;
}

// One logged interaction as the learner saw it.
struct Observation {
    Context context;
    std::size_t arm = 0;
    double outcome = 0.0;
    double propensity = 1.0;
};

}  // namespace avbai
