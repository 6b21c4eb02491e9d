#pragma once

// Nuisance models refit from logged history: a per-arm fractional probit mean
// model g_t and a per-arm linear model of squared residuals, truncated to
// [floor, cap], for the conditional variance V_t.

#include "avbai/env.hpp"
#include "avbai/normal.hpp"
#include "avbai/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace avbai {

inline constexpr double kPredictionClip = 1e-6;
inline constexpr double kPriorMean = 0.5;
// Largest possible variance of an outcome in [0, 1]; used for arms with no data.
inline constexpr double kPriorVariance = 0.25;

// Observations bucketed by arm, with design rows (1, x) stored contiguously.
class History {
public:
    History(std::size_t num_arms, std::size_t context_dim)
        : num_arms_(num_arms), context_dim_(context_dim), arms_(num_arms) {}

    void add(const Observation& obs) {
        if (obs.arm >= num_arms_) throw std::out_of_range("observation arm out of range");
        if (static_cast<std::size_t>(obs.context.size()) != context_dim_)
            throw std::invalid_argument("observation context has wrong dimension");
        auto& bucket = arms_[obs.arm];
        bucket.design.push_back(1.0);
        for (Eigen::Index i = 0; i < obs.context.size(); ++i) bucket.design.push_back(obs.context[i]);
        bucket.outcomes.push_back(obs.outcome);
        ++size_;
    }

    std::size_t size() const { return size_; }
    std::size_t num_arms() const { return num_arms_; }
    std::size_t context_dim() const { return context_dim_; }
    std::size_t arm_count(std::size_t a) const { return arms_.at(a).outcomes.size(); }

    // n_a x (d + 1) design matrix view for arm a.
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    design(std::size_t a) const {
        const auto& bucket = arms_.at(a);
        return {bucket.design.data(), static_cast<Eigen::Index>(bucket.outcomes.size()),
                static_cast<Eigen::Index>(context_dim_ + 1)};
    }

    Eigen::Map<const Eigen::VectorXd> outcomes(std::size_t a) const {
        const auto& bucket = arms_.at(a);
        return {bucket.outcomes.data(), static_cast<Eigen::Index>(bucket.outcomes.size())};
    }

private:
    struct Bucket {
        std::vector<double> design;
        std::vector<double> outcomes;
    };
    std::size_t num_arms_;
    std::size_t context_dim_;
    std::size_t size_ = 0;
    std::vector<Bucket> arms_;
};

enum class FitKind { prior, constant, fitted };

// ---------------------------------------------------------------- mean model

struct ArmMeanFit {
    FitKind kind = FitKind::prior;
    double constant = kPriorMean;
    Eigen::VectorXd beta;  // intercept followed by context weights
    int iterations = 0;
    bool converged = true;
};

struct MeanModel {
    std::size_t context_dim = 0;
    std::size_t fit_time = 0;
    std::vector<ArmMeanFit> arms;

    bool converged() const {
        return std::all_of(arms.begin(), arms.end(), [](const ArmMeanFit& f) { return f.converged; });
    }
};

struct ProbitOptions {
    int max_iterations = 50;
    double gradient_tolerance = 1e-8;
    int max_halvings = 30;
};

namespace detail {

struct ProbitEval {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

// Fractional-response probit quasi-likelihood sum y log Phi(eta) + (1 - y) log Phi(-eta)
// with its exact gradient and Hessian.
template <class Design, class Outcomes>
ProbitEval probit_evaluate(const Design& X, const Outcomes& y, const Eigen::VectorXd& beta) {
    const Eigen::Index p = X.cols();
    ProbitEval ev;
    ev.gradient = Eigen::VectorXd::Zero(p);
    ev.hessian = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd weight(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double e = eta[i];
        const double yi = y[i];
        double lam_pos, lam_neg;
        if (std::abs(e) < -normal::kTailCutoff) {
            const double dens = normal::pdf(e);
            const double up = normal::cdf(e);
            const double down = normal::cdf(-e);
            lam_pos = dens / up;
            lam_neg = dens / down;
            ev.loglik += yi * std::log(up) + (1.0 - yi) * std::log(down);
        } else {
            lam_pos = normal::mills(e);
            lam_neg = normal::mills(-e);
            ev.loglik += yi * normal::log_cdf(e) + (1.0 - yi) * normal::log_cdf(-e);
        }
        const double score = yi * lam_pos - (1.0 - yi) * lam_neg;
        ev.gradient.noalias() += score * X.row(i).transpose();
        weight[i] = yi * lam_pos * (e + lam_pos) + (1.0 - yi) * lam_neg * (lam_neg - e);
    }
    ev.hessian.noalias() = -(X.transpose() * weight.asDiagonal() * X);
    return ev;
}

}  // namespace detail

// Newton-Raphson with step halving on one arm's observations. Never throws on
// non-convergence: the last iterate is returned with converged = false.
inline ArmMeanFit fit_arm_mean(const History& history, std::size_t a,
                               const Eigen::VectorXd* warm_start = nullptr,
                               const ProbitOptions& opts = {}) {
    const std::size_t d = history.context_dim();
    const std::size_t n = history.arm_count(a);
    ArmMeanFit fit;
    if (n == 0) return fit;
    const auto y = history.outcomes(a);
    if (d == 0 || n < d + 2) {
        fit.kind = FitKind::constant;
        fit.constant = y.mean();
        return fit;
    }
    const auto X = history.design(a);
    fit.kind = FitKind::fitted;
    // Coefficients that ran off on separable data are a poor starting point.
    const bool warm_ok = warm_start && warm_start->size() == X.cols() && warm_start->allFinite() &&
                         warm_start->lpNorm<Eigen::Infinity>() < 10.0;
    fit.beta = warm_ok ? *warm_start : Eigen::VectorXd::Zero(X.cols());
    auto ev = detail::probit_evaluate(X, y, fit.beta);
    fit.converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
        if (ev.gradient.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
            fit.converged = true;
            break;
        }
        fit.iterations = it + 1;
        Eigen::MatrixXd neg_h = -ev.hessian;
        neg_h.diagonal().array() += 1e-12;
        const Eigen::VectorXd step = neg_h.ldlt().solve(ev.gradient);
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h < opts.max_halvings; ++h) {
            Eigen::VectorXd cand = fit.beta + scale * step;
            auto cand_ev = detail::probit_evaluate(X, y, cand);
            // Near the optimum the likelihood gain drops below rounding; a
            // step that also shrinks the gradient is then still progress.
            const bool gain = cand_ev.loglik >= ev.loglik;
            const bool flat = cand_ev.loglik >= ev.loglik - 1e-12 * std::abs(ev.loglik) &&
                              cand_ev.gradient.lpNorm<Eigen::Infinity>() < ev.gradient.lpNorm<Eigen::Infinity>();
            if (std::isfinite(cand_ev.loglik) && (gain || flat)) {
                fit.beta = std::move(cand);
                ev = std::move(cand_ev);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break;
    }
    if (!fit.converged && ev.gradient.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance)
        fit.converged = true;
    return fit;
}

inline MeanModel fit_mean_model(const History& history, const ProbitOptions& opts = {}) {
    MeanModel model;
    model.context_dim = history.context_dim();
    model.fit_time = history.size();
    model.arms.reserve(history.num_arms());
    for (std::size_t a = 0; a < history.num_arms(); ++a)
        model.arms.push_back(fit_arm_mean(history, a, nullptr, opts));
    return model;
}

// Refits only arm a, warm-starting from its previous coefficients.
inline void refit_mean_arm(MeanModel& model, const History& history, std::size_t a,
                           const ProbitOptions& opts = {}) {
    const auto& prev = model.arms.at(a);
    const Eigen::VectorXd* warm = prev.kind == FitKind::fitted ? &prev.beta : nullptr;
    model.arms[a] = fit_arm_mean(history, a, warm, opts);
    model.fit_time = history.size();
}

inline double predict_mean(const MeanModel& model, const Context& x, std::size_t a) {
    const auto& fit = model.arms.at(a);
    double p = fit.constant;
    if (fit.kind == FitKind::fitted) {
        if (static_cast<std::size_t>(x.size()) != model.context_dim)
            throw std::invalid_argument("context dimension does not match mean model");
        const double eta = fit.beta[0] + fit.beta.tail(x.size()).dot(x);
        p = normal::cdf(eta);
    }
    return std::clamp(p, kPredictionClip, 1.0 - kPredictionClip);
}

inline ArmVector predict_means(const MeanModel& model, const Context& x) {
    ArmVector h(static_cast<Eigen::Index>(model.arms.size()));
    for (std::size_t a = 0; a < model.arms.size(); ++a) h[static_cast<Eigen::Index>(a)] = predict_mean(model, x, a);
    return h;
}

// Predictions for every row of a (1, x) design matrix.
template <class Design>
Eigen::VectorXd predict_mean_rows(const MeanModel& model, const Design& X, std::size_t a) {
    const auto& fit = model.arms.at(a);
    Eigen::VectorXd p(X.rows());
    if (fit.kind == FitKind::fitted) {
        const Eigen::VectorXd eta = X * fit.beta;
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal::cdf(eta[i]);
    } else {
        p.setConstant(fit.constant);
    }
    return p.cwiseMax(kPredictionClip).cwiseMin(1.0 - kPredictionClip);
}

// ------------------------------------------------------------ variance model

struct ArmVarianceFit {
    FitKind kind = FitKind::prior;
    double constant = kPriorVariance;
    Eigen::VectorXd coef;
};

struct VarianceModel {
    std::size_t context_dim = 0;
    double floor = 0.01;
    double cap = 1.0;
    std::vector<ArmVarianceFit> arms;
};

inline constexpr double kOlsRidge = 1e-8;

// Per-arm OLS of squared residuals (Y - g(X, a))^2 on (1, X).
inline ArmVarianceFit fit_arm_variance(const History& history, const MeanModel& mean_model, std::size_t a) {
    const std::size_t d = history.context_dim();
    const std::size_t n = history.arm_count(a);
    ArmVarianceFit fit;
    if (n == 0) return fit;
    const auto X = history.design(a);
    const auto y = history.outcomes(a);
    const Eigen::VectorXd resid2 = (y - predict_mean_rows(mean_model, X, a)).array().square().matrix();
    if (d == 0 || n < d + 2) {
        fit.kind = FitKind::constant;
        fit.constant = resid2.mean();
        return fit;
    }
    fit.kind = FitKind::fitted;
    Eigen::MatrixXd gram = X.transpose() * X;
    const Eigen::VectorXd rhs = X.transpose() * resid2;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        gram.diagonal().array() += kOlsRidge;
        llt.compute(gram);
    }
    fit.coef = llt.solve(rhs);
    if (!fit.coef.allFinite()) {
        gram.diagonal().array() += kOlsRidge;
        fit.coef = gram.ldlt().solve(rhs);
    }
    return fit;
}

inline VarianceModel fit_variance_model(const History& history, const MeanModel& mean_model, double floor,
                                        double cap) {
    if (!(floor > 0.0) || !(cap >= floor)) throw std::invalid_argument("variance bounds must satisfy 0 < floor <= cap");
    VarianceModel model;
    model.context_dim = history.context_dim();
    model.floor = floor;
    model.cap = cap;
    model.arms.reserve(history.num_arms());
    for (std::size_t a = 0; a < history.num_arms(); ++a)
        model.arms.push_back(fit_arm_variance(history, mean_model, a));
    return model;
}

inline void refit_variance_arm(VarianceModel& model, const History& history, const MeanModel& mean_model,
                               std::size_t a) {
    model.arms.at(a) = fit_arm_variance(history, mean_model, a);
}

// Untruncated prediction of the squared-residual regression.
inline double predict_variance_raw(const VarianceModel& model, const Context& x, std::size_t a) {
    const auto& fit = model.arms.at(a);
    if (fit.kind != FitKind::fitted) return fit.constant;
    if (static_cast<std::size_t>(x.size()) != model.context_dim)
        throw std::invalid_argument("context dimension does not match variance model");
    return fit.coef[0] + fit.coef.tail(x.size()).dot(x);
}

inline double predict_variance(const VarianceModel& model, const Context& x, std::size_t a) {
    return std::clamp(predict_variance_raw(model, x, a), model.floor, model.cap);
}

inline ArmVector predict_variances(const VarianceModel& model, const Context& x) {
    ArmVector v(static_cast<Eigen::Index>(model.arms.size()));
    for (std::size_t a = 0; a < model.arms.size(); ++a) v[static_cast<Eigen::Index>(a)] = predict_variance(model, x, a);
    return v;
}

}  // namespace avbai
