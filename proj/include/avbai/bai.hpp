#pragma once

// One adaptive best-arm-identification run: learn nuisances, choose test
// weights, sample from the learned policy, and eliminate arms until at most one
// remains.

#include "avbai/confseq.hpp"
#include "avbai/env.hpp"
#include "avbai/policy.hpp"
#include "avbai/regress.hpp"
#include "avbai/scorekit.hpp"
#include "avbai/snr.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace avbai {

// What the loop used at step t; history_size must never exceed t - 1.
struct StepProbe {
    std::size_t t = 0;
    std::size_t history_size = 0;
    std::size_t model_fit_time = 0;
    std::size_t stats_steps = 0;
};

struct RunConfig {
    BoundaryParams boundary;
    PolicyConfig policy;
    std::size_t horizon_cap = 30000;
    std::size_t refit_every = 1;
    // Sample uniformly for t <= t0. Early nuisance fits built on a handful of
    // pulls (a sample mean of two zeros, say) can starve an arm before its
    // estimates recover; see README.
    bool uniform_burn_in = true;
    SnrOptions weight_snr;  // test weights (D = score Gram)
    ProbitOptions probit;
    TrajectoryWriter* trajectory = nullptr;
    std::function<void(const StepProbe&)> probe;

    void validate() const {
        boundary.validate();
        policy.validate();
        if (horizon_cap == 0) throw std::invalid_argument("horizon cap must be >= 1");
        if (refit_every == 0) throw std::invalid_argument("refit cadence must be >= 1");
    }
};

struct BaiResult {
    std::size_t recommended = 0;
    std::size_t tau = 0;
    bool correct = false;
    bool hit_cap = false;
    bool tie_broken = false;
    std::vector<std::optional<std::size_t>> elimination_times;
    std::vector<double> final_bounds;
};

inline std::size_t sample_arm(const ArmVector& pi, double u) {
    double acc = 0.0;
    for (Eigen::Index b = 0; b + 1 < pi.size(); ++b) {
        acc += pi[b];
        if (u < acc) return static_cast<std::size_t>(b);
    }
    return static_cast<std::size_t>(pi.size() - 1);
}

template <class Rng>
BaiResult run_bai(const BanditInstance& inst, const RunConfig& cfg, Rng& rng) {
    inst.validate();
    cfg.validate();
    const std::size_t k = inst.num_arms;
    const PolicyMode mode = cfg.policy.mode;
    const std::size_t d_learn = mode == PolicyMode::contextual ? inst.context_dim : 0;

    History history(k, d_learn);
    MeanModel mean_model = fit_mean_model(history, cfg.probit);
    VarianceModel var_model =
        fit_variance_model(history, mean_model, cfg.policy.variance_floor, cfg.policy.variance_cap);
    RunningStats stats(k);
    TestProcessState tp(k);
    ConfidenceSet cs(k);
    std::vector<bool> dirty(k, false);
    std::vector<WeightVector> weights = tp.weights;
    std::vector<WeightVector> policy_warm = tp.weights;
    std::vector<double> bounds(k, -std::numeric_limits<double>::infinity());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const ArmVector uniform_pi = ArmVector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));

    BaiResult result;
    std::size_t t = 0;
    while (t < cfg.horizon_cap) {
        ++t;
        if ((t - 1) % cfg.refit_every == 0) {
            for (std::size_t a = 0; a < k; ++a) {
                if (!dirty[a]) continue;
                refit_mean_arm(mean_model, history, a, cfg.probit);
                refit_variance_arm(var_model, history, mean_model, a);
                dirty[a] = false;
            }
            mean_model.fit_time = history.size();
        }
        if (cfg.probe) cfg.probe({t, history.size(), mean_model.fit_time, stats.t});

        // Test weights from H_{t-1}.
        const double top = stats.mu.maxCoeff();
        const bool testable = stats.t > 0 && stats.gram.diagonal().minCoeff() > 0.0;
        for (std::size_t a = 0; a < k; ++a) {
            if (!cs.contains(a)) continue;
            if (testable && stats.mu[static_cast<Eigen::Index>(a)] < top) {
                SnrSolution sol = solve_snr({stats.mu, stats.gram, a}, cfg.weight_snr, &weights[a]);
                weights[a] = sol.ok() ? std::move(sol.weight) : default_weight(k, a);
            } else {
                weights[a] = default_weight(k, a);
            }
        }

        ArmVector theta = zero_theta(k);
        const bool learn_policy = mode != PolicyMode::uniform && !(cfg.uniform_burn_in && t <= cfg.boundary.burn_in);
        if (learn_policy && stats.t > 0) {
            const int n = cfg.policy.fixed_iterations.value_or(descent_iterations(t));
            theta = psgd(PolicyInputs::from_stats(stats), cfg.policy, theta, n, &policy_warm).theta;
        }

        const Context x = sample_context(inst, rng);
        const Context x_learn = d_learn > 0 ? x : Context();
        const ArmVector h = predict_means(mean_model, x_learn);
        const ArmVector v = predict_variances(var_model, x_learn);
        const ArmVector pi = learn_policy ? policy_from_theta(v, theta) : uniform_pi;
        const std::size_t arm = sample_arm(pi, unif(rng));
        const double y = sample_outcome(inst, x, arm, rng);
        const double propensity = pi[static_cast<Eigen::Index>(arm)];

        const ArmVector phi = compute_score(h, arm, y, propensity);
        update_stats(stats, phi, h, v);
        update_test_process(tp, stats, phi, weights);

        for (std::size_t a = 0; a < k; ++a)
            if (cs.contains(a))
                bounds[a] = lower_bound(tp.psi_hat(a), tp.sigma_hat(a), t, cfg.boundary.alpha, cfg.boundary.rho);
        if (cs.update(bounds, t, cfg.boundary.burn_in) > 0) {
            for (std::size_t a = 0; a < k; ++a) {
                if (!cs.contains(a) && !tp.eliminated[a]) {
                    tp.eliminated[a] = true;
                    tp.elimination_time[a] = t;
                }
            }
        }
        if (cfg.trajectory) cfg.trajectory->write(t, arm, y, propensity, phi, cs.latest_bounds());

        history.add({x_learn, arm, y, propensity});
        dirty[arm] = true;
        if (cs.size() <= 1) break;
    }

    result.tau = t;
    const auto members = cs.members();
    if (members.size() == 1) {
        result.recommended = members.front();
    } else {
        result.recommended = cs.argmin_bound();
        result.tie_broken = members.empty();
        result.hit_cap = !members.empty();
    }
    result.correct = result.recommended == best_arm(inst);
    result.elimination_times = cs.elimination_times();
    result.final_bounds = cs.latest_bounds();
    return result;
}

}  // namespace avbai
