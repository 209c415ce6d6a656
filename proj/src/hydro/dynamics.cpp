#include "dpsim/hydro/dynamics.hpp"

#include <fmt/format.h>

#include "dpsim/hydro/kinematics.hpp"

namespace dpsim::hydro
{

namespace
{

using Vector12 = Eigen::Matrix<double, 12, 1>;

struct Derivative
{
  const VesselModel & model;
  const Vector6 & load;  // N, memory force already subtracted
  double U;

  Vector12 operator()(const Vector12 & y) const
  {
    const Pose6 eta{y(0), y(1), y(2), y(3), y(4), y(5)};
    const Vector6 nu = y.tail<6>();
    Vector12 dy;
    dy.head<6>() = kinematic_transform(eta, BodyVel6::from(nu));
    Vector6 acc = model.solve_mass(load - model.restoring() * y.head<6>());
    if (U != 0.0) {
      // v = dv + vbar, d(vbar)/dt = U [0, -r, q, 0, 0, 0]
      acc(1) += -U * nu(5);
      acc(2) += U * nu(4);
    }
    dy.tail<6>() = acc;
    return dy;
  }
};

}  // namespace

VesselModel::VesselModel(const HydroDatabase & db, RetardationKernel kernel, const Matrix6 & added_mass_inf)
: rigid_mass_(db.rigid_mass),
  added_mass_inf_(added_mass_inf),
  total_mass_(db.rigid_mass + added_mass_inf),
  restoring_(db.restoring),
  kernel_(std::move(kernel))
{
  const Eigen::JacobiSVD<Matrix6> svd(total_mass_);
  const auto & sv = svd.singularValues();
  const double cond = sv(5) > 0.0 ? sv(0) / sv(5) : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxMassCondition)) {
    throw SingularMassMatrix(fmt::format("M_RB + A(inf) has condition number {:.3g}", cond));
  }
  lu_.compute(total_mass_);
  kernel_zero_ = kernel_.is_zero();
}

VesselModel VesselModel::build(const HydroDatabase & db, double cutoff_time, double step)
{
  auto kernel = compute_retardation(db, cutoff_time, step);
  // Resolution tied to the grid top so the choice is invariant under Froude scaling.
  check_frequency_grid(db.freq);
  const double fine_step = std::min(step, 1.0 / (32.0 * db.freq.back()));
  const auto fine = fine_step == step ? kernel : compute_retardation(db, cutoff_time, fine_step);
  const Matrix6 a_inf = compute_infinite_added_mass(db, fine);
  return VesselModel(db, std::move(kernel), a_inf);
}

Vector6 VesselModel::memory_force(const VelocityHistory & history) const
{
  Vector6 mu = Vector6::Zero();
  if (kernel_zero_) {
    return mu;
  }
  const std::size_t n = std::min(history.size(), kernel_.R.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double weight = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
    mu.noalias() += weight * (kernel_.R[k] * history.lag(k));
  }
  return kernel_.step * mu;
}

VesselState make_state(const VesselModel & model, double t, const Pose6 & eta, const BodyVel6 & nu, double U)
{
  VesselState s;
  s.t = t;
  s.eta = eta;
  s.nu = nu;
  s.history = VelocityHistory(model.kernel().samples());
  s.history.set_newest(PerturbedVel6::from_body(nu, eta, U).dv.vec());
  return s;
}

VesselState step_dynamics(const VesselState & state, const VesselModel & model, const Vector6 & f_thruster_kn,
                          const Vector6 & f_environment_kn, double h, double U)
{
  if (std::abs(h - model.step()) > 1e-12 * std::max(1.0, h)) {
    throw std::invalid_argument(
      fmt::format("step {} s does not match the kernel step {} s", h, model.step()));
  }

  const Vector6 load = 1e3 * (f_thruster_kn + f_environment_kn) - model.memory_force(state.history);
  const Derivative f{model, load, U};

  Vector12 y;
  y.head<6>() = state.eta.vec();
  y.tail<6>() = state.nu.vec();

  const Vector12 k1 = f(y);
  const Vector12 k2 = f(y + 0.5 * h * k1);
  const Vector12 k3 = f(y + 0.5 * h * k2);
  const Vector12 k4 = f(y + h * k3);
  y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  VesselState next;
  next.t = state.t + h;
  next.eta = Pose6::from(y.head<6>());
  next.nu = BodyVel6::from(y.tail<6>());
  next.history = state.history;
  next.history.push(PerturbedVel6::from_body(next.nu, next.eta, U).dv.vec());
  return next;
}

}  // namespace dpsim::hydro
