#pragma once

#include <limits>

#include "dpsim/common.hpp"

namespace dpsim::control
{

/// Operator target in NED: x, y in m, psi in rad.
struct Setpoint
{
  double x{0.0};
  double y{0.0};
  double psi{0.0};

  [[nodiscard]] Vector3 vec() const { return {x, y, psi}; }

  /// Throws std::invalid_argument on non-finite values; wraps psi.
  [[nodiscard]] static Setpoint make(double x, double y, double psi);
};

struct ReferenceState
{
  Vector3 eta_d{Vector3::Zero()};
  Vector3 eta_d_dot{Vector3::Zero()};
  Vector3 eta_d_ddot{Vector3::Zero()};

  /// At rest on a setpoint.
  [[nodiscard]] static ReferenceState at(const Setpoint & r);
};

inline constexpr double kUnlimited = std::numeric_limits<double>::infinity();

/// Third-order reference model per axis; Delta and Omega diagonals.
struct ReferenceGains
{
  Vector3 delta{Vector3::Ones()};
  Vector3 omega{Vector3::Constant(0.05)};  // rad/s
  Vector3 vmax{Vector3::Constant(kUnlimited)};
  Vector3 amax{Vector3::Constant(kUnlimited)};

  void validate() const;
};

/// Integrates eta_d''' + (2D+I) W eta_d'' + (2D+I) W^2 eta_d' + W^3 eta_d = W^3 r
/// over one step h with RK4 on the companion form. The heading error r - eta_d
/// is wrapped to (-pi, pi] before being fed in, and psi_d is wrapped after.
/// Optional velocity/acceleration limits saturate the states after the step.
[[nodiscard]] ReferenceState reference_step(const ReferenceState & ref, const Setpoint & r,
                                            const ReferenceGains & gains, double h);

/// PID diagonals. Units kN/m, kN/(m s), kN s/m (x, y) and kN m per rad,
/// rad s, rad/s (psi).
struct PidGains
{
  Vector3 kp{Vector3::Zero()};
  Vector3 ki{Vector3::Zero()};
  Vector3 kd{Vector3::Zero()};

  void validate() const;

  /// Gains tuned for the shuttle tanker position-keeping runs.
  [[nodiscard]] static PidGains shuttle_tanker();
};

struct PidOptions
{
  /// Per-axis bound on |K_I sum(eps) h| (kN, kN, kN m).
  Vector3 integral_limit{Vector3::Constant(kUnlimited)};
  /// First-order low-pass on the measured pose, rad/s; 0 disables it.
  double lowpass_cutoff{0.0};
};

struct PidState
{
  Vector3 integral{Vector3::Zero()};    // sum(eps) h, body frame
  Vector3 prev_error{Vector3::Zero()};  // eps(k-1); zero before the first step
  Vector3 filtered{Vector3::Zero()};    // low-pass pose
  bool filter_primed{false};
  std::uint64_t steps{0};

  void reset() { *this = PidState{}; }
};

/// Body-frame tracking error used by the controller:
/// eps = -R(psi_o)^T (eta_o - eta_d), heading difference wrapped.
/// The observed-minus-desired error is negated so positive gains restore.
[[nodiscard]] Vector3 body_error(const Vector3 & eta_o, const Vector3 & eta_d);

/// tau = K_P eps(k) + K_I sum eps(i) h + K_D (eps(k) - eps(k-1)) / h, with
/// eps(-1) = 0. The integral is clamped so each axis' integral term stays
/// within options.integral_limit. Returns (kN, kN, kN m).
[[nodiscard]] Vector3 pid_step(const Vector3 & eta_o, const ReferenceState & ref, const PidGains & gains, double h,
                               PidState & state, const PidOptions & options = {});

}  // namespace dpsim::control
