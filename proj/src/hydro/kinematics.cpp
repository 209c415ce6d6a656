#include "dpsim/hydro/kinematics.hpp"

#include <fmt/format.h>

namespace dpsim::hydro
{

Matrix3 rotation_zyx(double phi, double theta, double psi)
{
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double cth = std::cos(theta), sth = std::sin(theta);
  const double cpsi = std::cos(psi), spsi = std::sin(psi);

  Matrix3 r;
  r << cpsi * cth, -spsi * cphi + cpsi * sth * sphi, spsi * sphi + cpsi * cphi * sth,
    spsi * cth, cpsi * cphi + sphi * sth * spsi, -cpsi * sphi + sth * spsi * cphi,
    -sth, cth * sphi, cth * cphi;
  return r;
}

Matrix3 euler_rate_matrix(double phi, double theta)
{
  if (std::abs(theta) >= kPi / 2.0 - kGimbalMargin) {
    throw GimbalLock(fmt::format("pitch {:.9f} rad is at the Euler singularity", theta));
  }
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double cth = std::cos(theta), tth = std::tan(theta);

  Matrix3 t;
  t << 1.0, sphi * tth, cphi * tth,
    0.0, cphi, -sphi,
    0.0, sphi / cth, cphi / cth;
  return t;
}

Matrix6 kinematic_matrix(const Pose6 & eta)
{
  Matrix6 j = Matrix6::Zero();
  j.topLeftCorner<3, 3>() = rotation_zyx(eta.phi, eta.theta, eta.psi);
  j.bottomRightCorner<3, 3>() = euler_rate_matrix(eta.phi, eta.theta);
  return j;
}

Vector6 kinematic_transform(const Pose6 & eta, const BodyVel6 & nu)
{
  const Vector6 v = nu.vec();
  Vector6 out;
  out.head<3>() = rotation_zyx(eta.phi, eta.theta, eta.psi) * v.head<3>();
  out.tail<3>() = euler_rate_matrix(eta.phi, eta.theta) * v.tail<3>();
  return out;
}

}  // namespace dpsim::hydro
