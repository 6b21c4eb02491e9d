#pragma once

// Gaussian-mixture boundary, per-arm lower confidence bounds and the
// elimination set over arm indices.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace avbai {

struct BoundaryParams {
    double alpha = 0.1;
    double rho = 0.06;
    std::size_t burn_in = 100;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
        if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    }
};

// l_{t,alpha,rho}(x) = t^{-1/2} sqrt( 2 (rho^2 + 1/(t x^2)) / rho^2 * log(1 + sqrt(t x^2 rho^2 + 1) / (2 alpha)) )
inline double boundary(double t, double x, double alpha, double rho) {
    if (!(t >= 1.0)) throw std::invalid_argument("boundary: t must be >= 1");
    if (!(x > 0.0)) throw std::invalid_argument("boundary: x must be > 0");
    const double tx2 = t * x * x;
    const double r2 = rho * rho;
    const double width = 2.0 * (r2 + 1.0 / tx2) / r2 * std::log(1.0 + std::sqrt(tx2 * r2 + 1.0) / (2.0 * alpha));
    return std::sqrt(width / t);
}

// psi_hat - sigma_hat * l(t, sigma_hat); -inf while sigma_hat = 0.
inline double lower_bound(double psi_hat, double sigma_hat, std::size_t t, double alpha, double rho) {
    if (sigma_hat < 0.0) throw std::invalid_argument("lower_bound: sigma_hat must be >= 0");
    if (sigma_hat == 0.0 || t == 0) return -std::numeric_limits<double>::infinity();
    return psi_hat - sigma_hat * boundary(static_cast<double>(t), sigma_hat, alpha, rho);
}

// rho = sqrt((-log(2 alpha) + log(1 - 2 log(2 alpha))) / t_star)
inline double select_rho(double alpha, double t_star) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("select_rho needs alpha in (0, 0.5)");
    if (!(t_star >= 1.0)) throw std::invalid_argument("select_rho needs t_star >= 1");
    const double l = std::log(2.0 * alpha);
    return std::sqrt((-l + std::log(1.0 - 2.0 * l)) / t_star);
}

class ConfidenceSet {
public:
    explicit ConfidenceSet(std::size_t num_arms) : times_(num_arms), last_bound_(num_arms, -kInf) {}

    std::size_t num_arms() const { return times_.size(); }
    bool contains(std::size_t a) const { return !times_.at(a).has_value(); }
    const std::optional<std::size_t>& elimination_time(std::size_t a) const { return times_.at(a); }
    const std::vector<std::optional<std::size_t>>& elimination_times() const { return times_; }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& e : times_) n += e ? 0 : 1;
        return n;
    }

    std::vector<std::size_t> members() const {
        std::vector<std::size_t> out;
        for (std::size_t a = 0; a < times_.size(); ++a)
            if (!times_[a]) out.push_back(a);
        return out;
    }

    // Latest bound per arm; eliminated arms keep the value they had when removed.
    const std::vector<double>& latest_bounds() const { return last_bound_; }

    // Removes every member whose bound is positive, but only once t >= t0.
    // Returns the number removed.
    std::size_t update(const std::vector<double>& bounds, std::size_t t, std::size_t burn_in) {
        if (bounds.size() != times_.size()) throw std::invalid_argument("need one bound per arm");
        std::size_t removed = 0;
        for (std::size_t a = 0; a < times_.size(); ++a) {
            if (times_[a]) continue;
            last_bound_[a] = bounds[a];
            if (t >= burn_in && bounds[a] > 0.0) {
                times_[a] = t;
                ++removed;
            }
        }
        return removed;
    }

    // Arm with the smallest latest bound (lowest index on ties).
    std::size_t argmin_bound() const {
        std::size_t best = 0;
        for (std::size_t a = 1; a < last_bound_.size(); ++a)
            if (last_bound_[a] < last_bound_[best]) best = a;
        return best;
    }

private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<std::optional<std::size_t>> times_;
    std::vector<double> last_bound_;
};

}  // namespace avbai
