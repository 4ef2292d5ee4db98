#pragma once

#include <Eigen/Core>
#include <numbers>

namespace kforce {

using Vec2 = Eigen::Vector2d;
/// Wavevector in m^-1.
using Wavevector = Eigen::Vector2d;
/// Force in N.
using ForceVec = Eigen::Vector2d;

inline constexpr double kHbar = 1.054571817e-34;    // J s (CODATA 2018, exact)
inline constexpr double kMassRb87 = 1.443160648e-25;  // kg
inline constexpr double kPi = std::numbers::pi;

}  // namespace kforce
