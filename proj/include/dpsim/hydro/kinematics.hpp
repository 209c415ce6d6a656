#pragma once

#include "dpsim/common.hpp"
#include "dpsim/hydro/types.hpp"

namespace dpsim::hydro
{

DPSIM_DEFINE_ERROR(GimbalLock);

inline constexpr double kGimbalMargin = 1e-6;

/// Body-to-NED rotation R_zyx(phi, theta, psi).
[[nodiscard]] Matrix3 rotation_zyx(double phi, double theta, double psi);

/// Euler-rate matrix T(Theta) mapping body angular rates to Euler-angle rates.
/// Throws GimbalLock when |theta| >= pi/2 - 1e-6.
[[nodiscard]] Matrix3 euler_rate_matrix(double phi, double theta);

/// Full 6x6 J(Theta) = blockdiag(R_zyx, T).
[[nodiscard]] Matrix6 kinematic_matrix(const Pose6 & eta);

/// d(eta)/dt = J(Theta) nu.
[[nodiscard]] Vector6 kinematic_transform(const Pose6 & eta, const BodyVel6 & nu);

/// 2-D heading rotation used by the 3-DOF control layer.
[[nodiscard]] inline Eigen::Matrix2d planar_rotation(double psi)
{
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

}  // namespace dpsim::hydro
