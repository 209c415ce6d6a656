#include "dpsim/hydro/retardation.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace dpsim::hydro
{

std::size_t kernel_length(double cutoff_time, double step)
{
  if (!(cutoff_time > 0.0) || !(step > 0.0)) {
    throw std::invalid_argument("cutoff time and step must be positive");
  }
  // Tolerate T_c / h landing a hair above an integer through rounding.
  const double ratio = cutoff_time / step;
  const double nearest = std::round(ratio);
  const double n = std::abs(ratio - nearest) < 1e-9 * std::max(1.0, ratio) ? nearest : std::ceil(ratio);
  return static_cast<std::size_t>(n) + 1;
}

double cutoff_factor(CutoffScaling scaling, double tau, double cutoff_time)
{
  return scaling == CutoffScaling::exponential ? std::exp(-3.0 * tau / cutoff_time) : 1.0;
}

double RetardationKernel::tail_ratio() const
{
  if (R.empty()) {
    return 0.0;
  }
  const double head = R.front().norm();
  if (head == 0.0) {
    return 0.0;
  }
  return R.back().norm() / head;
}

bool RetardationKernel::is_zero() const
{
  return std::all_of(R.begin(), R.end(), [](const Matrix6 & m) { return m.isZero(0.0); });
}

RetardationKernel RetardationKernel::zero(double cutoff_time, double step)
{
  RetardationKernel k;
  k.step = step;
  k.cutoff_time = cutoff_time;
  k.R.assign(kernel_length(cutoff_time, step), Matrix6::Zero());
  return k;
}

RetardationKernel compute_retardation(
  const HydroDatabase & db, double cutoff_time, double step, CutoffScaling scaling)
{
  check_frequency_grid(db.freq);
  if (db.damping.size() != db.freq.size()) {
    throw InsufficientFrequencyGrid("damping table does not match the frequency grid");
  }

  RetardationKernel kernel = RetardationKernel::zero(cutoff_time, step);
  const std::size_t nf = db.freq.size();

  // Trapezoid weights over a possibly non-uniform grid, plus the segment
  // [0, f_0] with B held at its first sample (the f = 0 node is w0).
  std::vector<double> w(nf, 0.0);
  const double w0 = 0.5 * db.freq[0];
  w[0] += 0.5 * db.freq[0];
  for (std::size_t i = 0; i + 1 < nf; ++i) {
    const double df = db.freq[i + 1] - db.freq[i];
    w[i] += 0.5 * df;
    w[i + 1] += 0.5 * df;
  }

  for (std::size_t k = 0; k < kernel.R.size(); ++k) {
    const double tau = kernel.tau(k);
    Matrix6 acc = w0 * db.damping[0];
    for (std::size_t i = 0; i < nf; ++i) {
      acc += (w[i] * std::cos(2.0 * kPi * db.freq[i] * tau)) * db.damping[i];
    }
    kernel.R[k] = (4.0 * cutoff_factor(scaling, tau, cutoff_time)) * acc;
  }
  return kernel;
}

Matrix6 compute_infinite_added_mass(
  const HydroDatabase & db, const RetardationKernel & kernel, double f_ref)
{
  const auto it = std::find_if(db.freq.begin(), db.freq.end(), [&](double f) {
    return std::abs(f - f_ref) <= 1e-12 * std::max(1.0, f);
  });
  if (it == db.freq.end()) {
    throw std::invalid_argument(fmt::format("f_ref = {} Hz is not on the frequency grid", f_ref));
  }
  const auto idx = static_cast<std::size_t>(it - db.freq.begin());
  const double omega = 2.0 * kPi * db.freq[idx];

  Matrix6 integral = Matrix6::Zero();
  const std::size_t n = kernel.R.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double weight = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
    integral += (weight * kernel.step * std::sin(omega * kernel.tau(k))) * kernel.R[k];
  }
  return db.added_mass[idx] + integral / omega;
}

Matrix6 compute_infinite_added_mass(const HydroDatabase & db, const RetardationKernel & kernel)
{
  check_frequency_grid(db.freq);
  const std::size_t nf = db.freq.size();
  Matrix6 sum = Matrix6::Zero();
  for (std::size_t i = nf - 3; i < nf; ++i) {
    sum += compute_infinite_added_mass(db, kernel, db.freq[i]);
  }
  return sum / 3.0;
}

}  // namespace dpsim::hydro
