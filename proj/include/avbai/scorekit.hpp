#pragma once

// Doubly-robust scores and the online sufficient statistics built from them.

#include "avbai/regress.hpp"
#include "avbai/types.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace avbai {

// phi(b) = g(x, b) + 1[b = A] (y - g(x, b)) / pi(x, A), given the predictions g(x, .).
inline ArmVector compute_score(const ArmVector& predictions, std::size_t taken_arm, double outcome,
                               double propensity) {
    if (!(propensity > 0.0)) throw std::domain_error("positivity violated: propensity must be > 0");
    if (taken_arm >= static_cast<std::size_t>(predictions.size())) throw std::out_of_range("taken arm out of range");
    ArmVector phi = predictions;
    const auto a = static_cast<Eigen::Index>(taken_arm);
    phi[a] += (outcome - predictions[a]) / propensity;
    return phi;
}

inline ArmVector compute_score(const MeanModel& mean_model, const Context& x, std::size_t taken_arm,
                               double outcome, double propensity) {
    return compute_score(predict_means(mean_model, x), taken_arm, outcome, propensity);
}

// Running means over steps i = 1..t:
//   mu     (1/t) sum phi_i
//   gram   (1/t) sum u_i u_i^T,  u_i = phi_i - mu_i  (mean as of step i)
//   pred_gram, pred_mean   second and first moments of h_i = g_i(X_i, .)
//   vgeo   (1/t) sum sqrt(V_i(X_i, a) V_i(X_i, b))
struct RunningStats {
    std::size_t t = 0;
    ArmVector mu;
    ArmMatrix gram;
    ArmMatrix pred_gram;
    ArmVector pred_mean;
    ArmMatrix vgeo;

    RunningStats() = default;
    explicit RunningStats(std::size_t num_arms) {
        const auto k = static_cast<Eigen::Index>(num_arms);
        mu = ArmVector::Zero(k);
        gram = ArmMatrix::Zero(k, k);
        pred_gram = ArmMatrix::Zero(k, k);
        pred_mean = ArmVector::Zero(k);
        vgeo = ArmMatrix::Zero(k, k);
    }

    std::size_t num_arms() const { return static_cast<std::size_t>(mu.size()); }
    ArmVector arm_variances() const { return gram.diagonal(); }

    // Constant-weight variance (1/t) sum (w^T u_i)^2.
    double weight_variance(const ArmVector& w) const { return w.dot(gram * w); }

    // (1/t) sum (h_i - m)(h_i - m)^T for a fixed centre m.
    ArmMatrix centered_pred_gram(const ArmVector& centre) const {
        ArmMatrix out = pred_gram - pred_mean * centre.transpose() - centre * pred_mean.transpose() +
                        centre * centre.transpose();
        return 0.5 * (out + out.transpose());
    }
};

inline void update_stats(RunningStats& stats, const ArmVector& score, const ArmVector& predictions,
                         const ArmVector& variances) {
    const auto k = static_cast<Eigen::Index>(stats.num_arms());
    if (score.size() != k || predictions.size() != k || variances.size() != k)
        throw std::invalid_argument("update_stats: vectors must have length K");
    stats.t += 1;
    const double inv_t = 1.0 / static_cast<double>(stats.t);
    stats.mu += (score - stats.mu) * inv_t;
    const ArmVector u = score - stats.mu;
    stats.gram += (u * u.transpose() - stats.gram) * inv_t;
    stats.pred_gram += (predictions * predictions.transpose() - stats.pred_gram) * inv_t;
    stats.pred_mean += (predictions - stats.pred_mean) * inv_t;
    const ArmVector root = variances.cwiseSqrt();
    stats.vgeo += (root * root.transpose() - stats.vgeo) * inv_t;
}

// ---------------------------------------------------------------- weights

// An element of Delta(a): w(a) = -1, the rest on the (K-1)-simplex.
struct WeightVector {
    std::size_t arm = 0;
    ArmVector w;

    bool valid(double tol = 1e-8) const {
        const auto a = static_cast<Eigen::Index>(arm);
        if (a >= w.size() || std::abs(w[a] + 1.0) > tol) return false;
        double sum = 0.0;
        for (Eigen::Index b = 0; b < w.size(); ++b) {
            if (b == a) continue;
            if (w[b] < -tol) return false;
            sum += w[b];
        }
        return std::abs(sum - 1.0) <= tol;
    }
};

// Default w0^a: -1 at a, uniform 1/(K - 1) elsewhere.
inline WeightVector default_weight(std::size_t num_arms, std::size_t arm) {
    WeightVector out;
    out.arm = arm;
    out.w = ArmVector::Constant(static_cast<Eigen::Index>(num_arms), 1.0 / static_cast<double>(num_arms - 1));
    out.w[static_cast<Eigen::Index>(arm)] = -1.0;
    return out;
}

// ------------------------------------------------------------ test processes

struct TestProcessState {
    std::vector<double> drift_sum;     // t * psi_hat_t(a)
    std::vector<double> variance_sum;  // t * sigma_hat_t^2(a)
    std::vector<WeightVector> weights;
    std::vector<bool> eliminated;
    std::vector<std::optional<std::size_t>> elimination_time;
    std::size_t t = 0;

    TestProcessState() = default;
    explicit TestProcessState(std::size_t num_arms)
        : drift_sum(num_arms, 0.0), variance_sum(num_arms, 0.0), eliminated(num_arms, false),
          elimination_time(num_arms) {
        for (std::size_t a = 0; a < num_arms; ++a) weights.push_back(default_weight(num_arms, a));
    }

    std::size_t num_arms() const { return drift_sum.size(); }
    double psi_hat(std::size_t a) const { return t == 0 ? 0.0 : drift_sum.at(a) / static_cast<double>(t); }
    double sigma_hat(std::size_t a) const {
        return t == 0 ? 0.0 : std::sqrt(std::max(0.0, variance_sum.at(a) / static_cast<double>(t)));
    }
};

inline constexpr double kWeightTolerance = 1e-8;

// Adds step t's increments. `stats` must already include this step's score so
// that centring uses mu_t. Eliminated arms stay frozen.
inline void update_test_process(TestProcessState& tp, const RunningStats& stats, const ArmVector& score,
                                const std::vector<WeightVector>& weights_per_arm) {
    const std::size_t k = tp.num_arms();
    if (weights_per_arm.size() != k) throw std::invalid_argument("need one weight vector per arm");
    for (std::size_t a = 0; a < k; ++a) {
        if (tp.eliminated[a]) continue;
        const auto& wv = weights_per_arm[a];
        if (wv.arm != a || !wv.valid(kWeightTolerance))
            throw std::invalid_argument("weight for arm " + std::to_string(a) + " is outside Delta(a)");
    }
    const ArmVector centred = score - stats.mu;
    tp.t = stats.t;
    for (std::size_t a = 0; a < k; ++a) {
        if (tp.eliminated[a]) continue;
        const auto& w = weights_per_arm[a].w;
        tp.drift_sum[a] += w.dot(score);
        const double dev = w.dot(centred);
        tp.variance_sum[a] += dev * dev;
        tp.weights[a] = weights_per_arm[a];
    }
}

// ------------------------------------------------------------ trajectory dump

// Per-step CSV: t, arm, outcome, propensity, phi_1..phi_K, L_1..L_K.
class TrajectoryWriter {
public:
    TrajectoryWriter(std::ostream& out, std::size_t num_arms) : out_(out), k_(num_arms) {
        out_ << "t,arm,outcome,propensity";
        for (std::size_t b = 0; b < k_; ++b) out_ << ",phi_" << b;
        for (std::size_t b = 0; b < k_; ++b) out_ << ",L_" << b;
        out_ << '\n';
        out_.precision(10);
    }

    void write(std::size_t t, std::size_t arm, double outcome, double propensity, const ArmVector& score,
               const std::vector<double>& lower_bounds) {
        out_ << t << ',' << arm << ',' << outcome << ',' << propensity;
        for (Eigen::Index b = 0; b < score.size(); ++b) out_ << ',' << score[b];
        for (double l : lower_bounds) out_ << ',' << l;
        out_ << '\n';
    }

private:
    std::ostream& out_;
    std::size_t k_;
};

}  // namespace avbai
