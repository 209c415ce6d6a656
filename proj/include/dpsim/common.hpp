#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dpsim
{

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kGravity = 9.81;

/// Base for every error raised by the library. `code()` is a stable
/// identifier (e.g. "GimbalLock") usable in wire diagnostics and logs.
class Error : public std::runtime_error
{
public:
  Error(std::string code, const std::string & what)
  : std::runtime_error(code + ": " + what), code_(std::move(code))
  {
  }

  [[nodiscard]] const std::string & code() const noexcept { return code_; }

private:
  std::string code_;
};

#define DPSIM_DEFINE_ERROR(Name)                                               \
  class Name : public ::dpsim::Error                                           \
  {                                                                            \
  public:                                                                      \
    explicit Name(const std::string & what) : ::dpsim::Error(#Name, what) {}   \
  }

/// Maps any angle to (-pi, pi].
[[nodiscard]] inline double wrap_angle(double a)
{
  if (!std::isfinite(a)) {
    return a;
  }
  double w = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) {
    w += 2.0 * kPi;
  }
  return w;
}

[[nodiscard]] inline double deg2rad(double d) { return d * kPi / 180.0; }
[[nodiscard]] inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace dpsim
