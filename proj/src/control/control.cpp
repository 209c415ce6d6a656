#include "dpsim/control/control.hpp"

#include <fmt/format.h>

#include "dpsim/hydro/kinematics.hpp"

namespace dpsim::control
{

namespace
{

bool finite_nonneg(const Vector3 & v) { return v.allFinite() && (v.array() >= 0.0).all(); }

}  // namespace

Setpoint Setpoint::make(double x, double y, double psi)
{
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(psi)) {
    throw std::invalid_argument("setpoint must be finite");
  }
  return {x, y, wrap_angle(psi)};
}

ReferenceState ReferenceState::at(const Setpoint & r)
{
  ReferenceState s;
  s.eta_d = r.vec();
  return s;
}

void ReferenceGains::validate() const
{
  if (!finite_nonneg(delta) || !omega.allFinite() || (omega.array() <= 0.0).any()) {
    throw std::invalid_argument("reference filter needs delta >= 0 and omega > 0");
  }
  if ((vmax.array() <= 0.0).any() || (amax.array() <= 0.0).any() || vmax.hasNaN() || amax.hasNaN()) {
    throw std::invalid_argument("reference limits must be positive");
  }
}

ReferenceState reference_step(const ReferenceState & ref, const Setpoint & r, const ReferenceGains & gains, double h)
{
  if (!(h > 0.0)) {
    throw std::invalid_argument("reference step needs h > 0");
  }
  ReferenceState out;
  const Vector3 target = r.vec();
  for (int i = 0; i < 3; ++i) {
    const double w = gains.omega(i);
    const double c2 = (2.0 * gains.delta(i) + 1.0) * w;
    const double c1 = (2.0 * gains.delta(i) + 1.0) * w * w;
    const double c0 = w * w * w;
    const bool heading = i == 2;
    // Companion form on (position, velocity, acceleration).
    auto f = [&](const Vector3 & s) {
      const double err = heading ? wrap_angle(target(i) - s(0)) : target(i) - s(0);
      return Vector3(s(1), s(2), c0 * err - c1 * s(1) - c2 * s(2));
    };
    const Vector3 s0(ref.eta_d(i), ref.eta_d_dot(i), ref.eta_d_ddot(i));
    const Vector3 k1 = f(s0);
    const Vector3 k2 = f(s0 + 0.5 * h * k1);
    const Vector3 k3 = f(s0 + 0.5 * h * k2);
    const Vector3 k4 = f(s0 + h * k3);
    Vector3 s1 = s0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s1(1) = std::clamp(s1(1), -gains.vmax(i), gains.vmax(i));
    s1(2) = std::clamp(s1(2), -gains.amax(i), gains.amax(i));
    if (heading) {
      s1(0) = wrap_angle(s1(0));
    }
    out.eta_d(i) = s1(0);
    out.eta_d_dot(i) = s1(1);
    out.eta_d_ddot(i) = s1(2);
  }
  return out;
}

void PidGains::validate() const
{
  if (!finite_nonneg(kp) || !finite_nonneg(ki) || !finite_nonneg(kd)) {
    throw std::invalid_argument("PID gains must be finite and non-negative");
  }
}

PidGains PidGains::shuttle_tanker()
{
  PidGains g;
  g.kp << 400.0, 400.0, 400000.0;
  g.ki << 0.05, 0.05, 2.0;
  g.kd << 2000.0, 2000.0, 200000.0;
  return g;
}

Vector3 body_error(const Vector3 & eta_o, const Vector3 & eta_d)
{
  Vector3 diff = eta_o - eta_d;
  diff(2) = wrap_angle(diff(2));
  Vector3 e;
  e.head<2>() = hydro::planar_rotation(eta_o(2)).transpose() * diff.head<2>();
  e(2) = diff(2);
  return -e;
}

Vector3 pid_step(const Vector3 & eta_o, const ReferenceState & ref, const PidGains & gains, double h,
                 PidState & state, const PidOptions & options)
{
  if (!(h > 0.0)) {
    throw std::invalid_argument("PID step needs h > 0");
  }
  Vector3 measured = eta_o;
  if (options.lowpass_cutoff > 0.0) {
    if (!state.filter_primed) {
      state.filtered = eta_o;
      state.filter_primed = true;
    } else {
      const double a = h * options.lowpass_cutoff / (1.0 + h * options.lowpass_cutoff);
      Vector3 delta = eta_o - state.filtered;
      delta(2) = wrap_angle(delta(2));
      state.filtered += a * delta;
      state.filtered(2) = wrap_angle(state.filtered(2));
    }
    measured = state.filtered;
  }

  const Vector3 eps = body_error(measured, ref.eta_d);
  state.integral += eps * h;
  for (int i = 0; i < 3; ++i) {
    if (gains.ki(i) > 0.0 && std::isfinite(options.integral_limit(i))) {
      const double bound = options.integral_limit(i) / gains.ki(i);
      state.integral(i) = std::clamp(state.integral(i), -bound, bound);
    }
  }
  const Vector3 tau = gains.kp.cwiseProduct(eps) + gains.ki.cwiseProduct(state.integral) +
                      gains.kd.cwiseProduct(eps - state.prev_error) / h;
  state.prev_error = eps;
  ++state.steps;
  return tau;
}

}  // namespace dpsim::control
