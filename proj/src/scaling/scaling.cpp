#include "dpsim/scaling/scaling.hpp"

#include <array>

#include <fmt/format.h>

namespace dpsim::scaling
{

namespace
{

constexpr std::array<std::pair<Kind, std::string_view>, 9> kNames{{
  {Kind::length, "length"},
  {Kind::angle, "angle"},
  {Kind::lin_velocity, "lin_velocity"},
  {Kind::ang_velocity, "ang_velocity"},
  {Kind::force, "force"},
  {Kind::moment, "moment"},
  {Kind::time, "time"},
  {Kind::mass, "mass"},
  {Kind::frequency, "frequency"},
}};

// Per-DOF factors of the quantities a 6x6 coefficient relates.
struct DofFactors
{
  std::array<double, 6> load, pos, vel, acc;
};

DofFactors dof_factors(const ScaleSpec & s)
{
  const double len = factor(Kind::length, s), vel = factor(Kind::lin_velocity, s);
  const double ang_vel = factor(Kind::ang_velocity, s), t = factor(Kind::time, s);
  DofFactors d{};
  for (std::size_t i = 0; i < 6; ++i) {
    const bool lin = i < 3;
    d.load[i] = factor(lin ? Kind::force : Kind::moment, s);
    d.pos[i] = lin ? len : 1.0;
    d.vel[i] = lin ? vel : ang_vel;
    d.acc[i] = d.vel[i] / t;
  }
  return d;
}

Matrix6 matrix_to_model(const Matrix6 & m, const std::array<double, 6> & row, const std::array<double, 6> & col)
{
  Matrix6 out;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      out(i, j) = m(i, j) / (row[static_cast<std::size_t>(i)] / col[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

}  // namespace

void ScaleSpec::validate() const
{
  if (!(lambda > 0.0) || !(gamma > 0.0) || !std::isfinite(lambda) || !std::isfinite(gamma)) {
    throw std::invalid_argument(fmt::format("invalid scale: lambda = {}, gamma = {}", lambda, gamma));
  }
}

Kind parse_kind(std::string_view name)
{
  for (const auto & [k, n] : kNames) {
    if (n == name) {
      return k;
    }
  }
  throw UnknownKind(fmt::format("unknown quantity kind '{}'", name));
}

std::string_view to_string(Kind kind)
{
  for (const auto & [k, n] : kNames) {
    if (k == kind) {
      return n;
    }
  }
  throw UnknownKind(fmt::format("unknown quantity kind {}", static_cast<int>(kind)));
}

double factor(Kind kind, const ScaleSpec & s)
{
  s.validate();
  const double l = s.lambda, g = s.gamma;
  switch (kind) {
    case Kind::length:
      return l;
    case Kind::angle:
      return 1.0;
    case Kind::lin_velocity:
    case Kind::time:
      return std::sqrt(l);
    case Kind::ang_velocity:
    case Kind::frequency:
      return 1.0 / std::sqrt(l);
    case Kind::force:
    case Kind::mass:
      return g * l * l * l;
    case Kind::moment:
      return g * l * l * l * l;
  }
  throw UnknownKind(fmt::format("unknown quantity kind {}", static_cast<int>(kind)));
}

double to_full_scale(double q, Kind kind, const ScaleSpec & s) { return q * factor(kind, s); }

double to_model_scale(double q, Kind kind, const ScaleSpec & s) { return q / factor(kind, s); }

Vector6 pose_to_full(const Vector6 & eta, const ScaleSpec & s)
{
  Vector6 out = eta;
  out.head<3>() *= factor(Kind::length, s);
  return out;
}

Vector6 pose_to_model(const Vector6 & eta, const ScaleSpec & s)
{
  Vector6 out = eta;
  out.head<3>() /= factor(Kind::length, s);
  return out;
}

Vector6 velocity_to_full(const Vector6 & nu, const ScaleSpec & s)
{
  Vector6 out = nu;
  out.head<3>() *= factor(Kind::lin_velocity, s);
  out.tail<3>() *= factor(Kind::ang_velocity, s);
  return out;
}

Vector6 velocity_to_model(const Vector6 & nu, const ScaleSpec & s)
{
  Vector6 out = nu;
  out.head<3>() /= factor(Kind::lin_velocity, s);
  out.tail<3>() /= factor(Kind::ang_velocity, s);
  return out;
}

Vector6 load_to_full(const Vector6 & f, const ScaleSpec & s)
{
  Vector6 out = f;
  out.head<3>() *= factor(Kind::force, s);
  out.tail<3>() *= factor(Kind::moment, s);
  return out;
}

Vector6 load_to_model(const Vector6 & f, const ScaleSpec & s)
{
  Vector6 out = f;
  out.head<3>() /= factor(Kind::force, s);
  out.tail<3>() /= factor(Kind::moment, s);
  return out;
}

hydro::HydroDatabase database_to_model(const hydro::HydroDatabase & full, const ScaleSpec & s)
{
  const DofFactors d = dof_factors(s);
  const double f_scale = factor(Kind::frequency, s);
  const double wave_amp = factor(Kind::length, s);
  hydro::HydroDatabase m = full;
  for (auto & f : m.freq) {
    f /= f_scale;
  }
  for (auto & a : m.added_mass) {
    a = matrix_to_model(a, d.load, d.acc);
  }
  for (auto & b : m.damping) {
    b = matrix_to_model(b, d.load, d.vel);
  }
  m.restoring = matrix_to_model(full.restoring, d.load, d.pos);
  m.rigid_mass = matrix_to_model(full.rigid_mass, d.load, d.acc);
  for (auto & x : m.rao) {
    for (int i = 0; i < 6; ++i) {
      x(i) /= d.load[static_cast<std::size_t>(i)] / wave_amp;
    }
  }
  return m;
}

env::EnvironmentSpec environment_to_model(const env::EnvironmentSpec & full, const ScaleSpec & s)
{
  env::EnvironmentSpec m = full;
  m.hs = to_model_scale(full.hs, Kind::length, s);
  m.tp = to_model_scale(full.tp, Kind::time, s);
  m.wind_speed = to_model_scale(full.wind_speed, Kind::lin_velocity, s);
  m.current_speed = to_model_scale(full.current_speed, Kind::lin_velocity, s);
  return m;
}

env::WindCurrentModel drag_model_to_model(const env::WindCurrentModel & full, const ScaleSpec & s)
{
  const double len = factor(Kind::length, s);
  auto scale = [&](env::DragModel d) {
    d.density /= s.gamma;
    d.frontal_area /= len * len;
    d.lateral_area /= len * len;
    d.length /= len;
    return d;
  };
  env::WindCurrentModel m = full;
  m.wind = scale(full.wind);
  m.current = scale(full.current);
  if (!full.drift.rows().empty()) {
    // kN per m^2 of Hs^2: force over length squared.
    std::vector<env::CoefficientTable::Row> rows = full.drift.rows();
    const double fx = factor(Kind::force, s) / (len * len), fn = factor(Kind::moment, s) / (len * len);
    for (auto & r : rows) {
      r.cx /= fx;
      r.cy /= fx;
      r.cn /= fn;
    }
    m.drift = env::CoefficientTable(std::move(rows));
  }
  return m;
}

env::WaveRealization waves_to_model(const env::WaveRealization & full, const ScaleSpec & s)
{
  env::WaveRealization m = full;
  for (auto & c : m.components) {
    c.amplitude = to_model_scale(c.amplitude, Kind::length, s);
    c.frequency = to_model_scale(c.frequency, Kind::frequency, s);
  }
  return m;
}

}  // namespace dpsim::scaling
