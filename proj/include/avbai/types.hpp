#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace avbai {

// Arm-indexed quantities are small (K is single digits in practice), so they
// use Eigen's bounded-dynamic storage and never touch the heap.
inline constexpr int kMaxArms = 16;

using ArmVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxArms, 1>;
using ArmMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxArms, kMaxArms>;

// Context vectors are heap-backed; d = 0 means the learner sees no context.
using Context = Eigen::VectorXd;

}  // namespace avbai
