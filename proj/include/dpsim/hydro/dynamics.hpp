#pragma once

#include <vector>

#include "dpsim/hydro/database.hpp"
#include "dpsim/hydro/retardation.hpp"
#include "dpsim/hydro/types.hpp"

namespace dpsim::hydro
{

DPSIM_DEFINE_ERROR(SingularMassMatrix);

inline constexpr double kMaxMassCondition = 1e12;

/// Fixed-length ring buffer of perturbation velocities, lag 0 = newest.
class VelocityHistory
{
public:
  VelocityHistory() = default;
  explicit VelocityHistory(std::size_t length) : data_(length, Vector6::Zero()) {}

  void push(const Vector6 & dv)
  {
    head_ = (head_ + data_.size() - 1) % data_.size();
    data_[head_] = dv;
  }

  [[nodiscard]] const Vector6 & lag(std::size_t k) const { return data_[(head_ + k) % data_.size()]; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  /// Overwrites the newest sample without advancing.
  void set_newest(const Vector6 & dv) { data_[head_] = dv; }

private:
  std::vector<Vector6> data_;
  std::size_t head_{0};
};

struct VesselState
{
  double t{0.0};
  Pose6 eta{};
  BodyVel6 nu{};
  VelocityHistory history{};  // spans [t - N h, t], lag 0 is the sample at t
};

/// Inertia, restoring and memory data needed to step one hull. Immutable
/// once built, so one model can be shared by any number of states.
class VesselModel
{
public:
  /// Throws SingularMassMatrix if cond(M_RB + A(inf)) > 1e12.
  VesselModel(const HydroDatabase & db, RetardationKernel kernel, const Matrix6 & added_mass_inf);

  /// Standard pipeline: kernel for step h with cutoff T_c, A(inf) from the
  /// top-of-grid average evaluated on a finer kernel (step <= 1 / (32 f_max)) so
  /// the sine integral is resolved at the highest grid frequencies.
  [[nodiscard]] static VesselModel build(const HydroDatabase & db, double cutoff_time, double step);

  [[nodiscard]] const Matrix6 & rigid_mass() const { return rigid_mass_; }
  [[nodiscard]] const Matrix6 & added_mass_inf() const { return added_mass_inf_; }
  [[nodiscard]] const Matrix6 & total_mass() const { return total_mass_; }
  [[nodiscard]] const Matrix6 & restoring() const { return restoring_; }
  [[nodiscard]] const RetardationKernel & kernel() const { return kernel_; }
  [[nodiscard]] double step() const { return kernel_.step; }

  /// int_0^Tc R(tau) dv(t - tau) dtau, trapezoidal over the history, in N.
  [[nodiscard]] Vector6 memory_force(const VelocityHistory & history) const;

  /// M^-1 x.
  [[nodiscard]] Vector6 solve_mass(const Vector6 & x) const { return lu_.solve(x); }

  /// 1/2 dv^T (M_RB + A(inf)) dv.
  [[nodiscard]] double kinetic_energy(const Vector6 & dv) const { return 0.5 * dv.dot(total_mass_ * dv); }

private:
  Matrix6 rigid_mass_;
  Matrix6 added_mass_inf_;
  Matrix6 total_mass_;
  Matrix6 restoring_;
  RetardationKernel kernel_;
  bool kernel_zero_{true};
  Eigen::PartialPivLU<Matrix6> lu_;
};

/// State at t with the given pose and velocity; the history treats the hull
/// as at rest before t.
[[nodiscard]] VesselState make_state(const VesselModel & model, double t, const Pose6 & eta,
                                     const BodyVel6 & nu, double U = 0.0);

/// Advances by one step of length h (must equal the kernel step). Thruster
/// and environment loads are in kN / kN m, body frame; they and the memory
/// force are held constant over the step while RK4 integrates kinematics,
/// restoring and inertia.
[[nodiscard]] VesselState step_dynamics(const VesselState & state, const VesselModel & model,
                                        const Vector6 & f_thruster_kn, const Vector6 & f_environment_kn,
                                        double h, double U = 0.0);

}  // namespace dpsim::hydro
