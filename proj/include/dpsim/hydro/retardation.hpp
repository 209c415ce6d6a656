#pragma once

#include <vector>

#include "dpsim/hydro/database.hpp"

namespace dpsim::hydro
{

/// Retardation (impulse response) kernel sampled at tau = k h, k = 0..N,
/// N = ceil(T_c / h).
struct RetardationKernel
{
  double step{0.0};         // h, s
  double cutoff_time{0.0};  // T_c, s
  std::vector<Matrix6> R;

  [[nodiscard]] std::size_t samples() const { return R.size(); }
  [[nodiscard]] double tau(std::size_t k) const { return static_cast<double>(k) * step; }

  /// ||R(T_c)|| / ||R(0)|| (Frobenius); 0 for an all-zero kernel.
  [[nodiscard]] double tail_ratio() const;

  [[nodiscard]] bool is_zero() const;

  /// Zero kernel of the right length for a given T_c and h.
  [[nodiscard]] static RetardationKernel zero(double cutoff_time, double step);
};

enum class CutoffScaling
{
  exponential,  // c(tau) = exp(-3 tau / T_c)
  none,         // c(tau) = 1, for checks against closed forms
};

[[nodiscard]] std::size_t kernel_length(double cutoff_time, double step);

[[nodiscard]] double cutoff_factor(CutoffScaling scaling, double tau, double cutoff_time);

/// R(tau) = c(tau) int 4 B(f) cos(2 pi f tau) df, trapezoidal over the
/// database frequency grid. Below the first grid frequency B is held at its
/// first sample down to f = 0.
[[nodiscard]] RetardationKernel compute_retardation(
  const HydroDatabase & db, double cutoff_time, double step,
  CutoffScaling scaling = CutoffScaling::exponential);

/// A(inf) = A(f) + 1/(2 pi f) int_0^Tc R(s) sin(2 pi f s) ds at one grid
/// frequency. Throws std::invalid_argument when f_ref is not on the grid.
[[nodiscard]] Matrix6 compute_infinite_added_mass(
  const HydroDatabase & db, const RetardationKernel & kernel, double f_ref);

/// Default: the relation averaged over the three highest grid frequencies.
[[nodiscard]] Matrix6 compute_infinite_added_mass(
  const HydroDatabase & db, const RetardationKernel & kernel);

}  // namespace dpsim::hydro
