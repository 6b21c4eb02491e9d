#pragma once

#include <cmath>
#include <numbers>

namespace avbai::normal {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Below this argument the direct ratio phi/Phi loses precision, so the
// asymptotic expansions take over.
inline constexpr double kTailCutoff = -25.0;

inline double pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

inline double log_cdf(double x) {
    if (x > kTailCutoff) return std::log(cdf(x));
    const double inv2 = 1.0 / (x * x);
    return -0.5 * x * x - std::log(-x) - kLogSqrt2Pi + std::log1p(-inv2 + 3.0 * inv2 * inv2);
}

// Inverse Mills ratio phi(x) / Phi(x).
inline double mills(double x) {
    if (x > kTailCutoff) return pdf(x) / cdf(x);
    const double inv2 = 1.0 / (x * x);
    return -x / (1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2);
}

}  // namespace avbai::normal
