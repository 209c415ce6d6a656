#pragma once

#include "dpsim/common.hpp"

namespace dpsim::hydro
{

/// Position and Euler angles (ZYX) in the earth-fixed NED frame.
struct Pose6
{
  double x{0.0}, y{0.0}, z{0.0};
  double phi{0.0}, theta{0.0}, psi{0.0};

  [[nodiscard]] Vector6 vec() const
  {
    Vector6 v;
    v << x, y, z, phi, theta, psi;
    return v;
  }

  /// Builds a pose from a 6-vector and wraps the angles to (-pi, pi].
  [[nodiscard]] static Pose6 from(const Vector6 & v)
  {
    return Pose6{v(0), v(1), v(2), wrap_angle(v(3)), wrap_angle(v(4)), wrap_angle(v(5))};
  }

  [[nodiscard]] bool finite() const { return vec().allFinite(); }
};

/// Linear and angular velocity in the body frame.
struct BodyVel6
{
  double u{0.0}, v{0.0}, w{0.0};
  double p{0.0}, q{0.0}, r{0.0};

  [[nodiscard]] Vector6 vec() const
  {
    Vector6 out;
    out << u, v, w, p, q, r;
    return out;
  }

  [[nodiscard]] static BodyVel6 from(const Vector6 & v)
  {
    return BodyVel6{v(0), v(1), v(2), v(3), v(4), v(5)};
  }

  [[nodiscard]] bool finite() const { return vec().allFinite(); }
};

/// Perturbation velocity in the seakeeping frame together with the mean
/// forward speed it was taken against. With U = 0 the perturbation is the
/// body velocity itself.
struct PerturbedVel6
{
  BodyVel6 dv{};
  double U{0.0};

  /// dv = v - vbar, vbar = U [1, -dpsi, dtheta, 0, 0, 0].
  [[nodiscard]] static PerturbedVel6 from_body(const BodyVel6 & nu, const Pose6 & eta, double U)
  {
    Vector6 mean = Vector6::Zero();
    mean(0) = U;
    mean(1) = -U * eta.psi;
    mean(2) = U * eta.theta;
    return PerturbedVel6{BodyVel6::from(nu.vec() - mean), U};
  }
};

}  // namespace dpsim::hydro
