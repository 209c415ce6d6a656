#include "dpsim/environment/environment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "dpsim/hydro/kinematics.hpp"
#include "dpsim/hydro/synthetic.hpp"

namespace dpsim::env
{

namespace
{

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kGridSlack = 0.10;

double wrap_positive(double a)
{
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) {
    w += kTwoPi;
  }
  return w >= kTwoPi ? 0.0 : w;
}

// Uniform [0, 1) from the raw 64-bit stream; independent of the standard
// library's distribution implementation.
double unit_uniform(std::mt19937_64 & rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Bracket
{
  std::size_t lo, hi;
  double w;  // weight of hi
};

Bracket bracket_periodic(const std::vector<double> & grid, double x)
{
  const std::size_t n = grid.size();
  if (n == 1) {
    return {0, 0, 0.0};
  }
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  if (it == grid.begin() || it == grid.end()) {
    // Between the last row and the first one shifted by a full turn.
    const double lo = grid.back();
    const double hi = grid.front() + kTwoPi;
    const double xx = x < grid.front() ? x + kTwoPi : x;
    return {n - 1, 0, (xx - lo) / (hi - lo)};
  }
  const auto hi = static_cast<std::size_t>(it - grid.begin());
  return {hi - 1, hi, (x - grid[hi - 1]) / (grid[hi] - grid[hi - 1])};
}

}  // namespace

void EnvironmentSpec::validate() const
{
  const bool finite = std::isfinite(hs) && std::isfinite(tp) && std::isfinite(wave_dir) &&
                      std::isfinite(wind_speed) && std::isfinite(wind_dir) && std::isfinite(current_speed) &&
                      std::isfinite(current_dir);
  if (!finite) {
    throw std::invalid_argument("environment values must be finite");
  }
  if (hs < 0.0 || !(tp > 0.0) || wind_speed < 0.0 || current_speed < 0.0) {
    throw std::invalid_argument(
      fmt::format("invalid environment: Hs = {}, Tp = {}, wind = {}, current = {}", hs, tp, wind_speed,
                  current_speed));
  }
}

EnvironmentSpec position_keeping_environment(double dir, std::uint64_t seed)
{
  EnvironmentSpec s;
  s.hs = 1.5;
  s.tp = 8.0;
  s.wave_dir = dir;
  s.wind_speed = 5.0;
  s.wind_dir = dir;
  s.current_speed = 0.5;
  s.current_dir = dir;
  s.seed = seed;
  return s;
}

double WaveRealization::m0() const
{
  double s = 0.0;
  for (const auto & c : components) {
    s += 0.5 * c.amplitude * c.amplitude;
  }
  return s;
}

double jonswap_density(double f, double hs, double tp, double gamma)
{
  if (!(f > 0.0)) {
    return 0.0;
  }
  const double w = kTwoPi * f;
  const double wp = kTwoPi / tp;
  const double sigma = w <= wp ? 0.07 : 0.09;
  const double a_gamma = 1.0 - 0.287 * std::log(gamma);
  const double r = (w - wp) / (sigma * wp);
  const double pm = (5.0 / 16.0) * hs * hs * std::pow(wp, 4) * std::pow(w, -5) * std::exp(-1.25 * std::pow(wp / w, 4));
  // Density per rad/s converted to per Hz.
  return kTwoPi * a_gamma * pm * std::pow(gamma, std::exp(-0.5 * r * r));
}

WaveRealization realize_spectrum(const EnvironmentSpec & spec, std::size_t n_components)
{
  spec.validate();
  if (n_components < kMinComponents) {
    throw std::invalid_argument(fmt::format("need at least {} wave components, got {}", kMinComponents, n_components));
  }

  // Cumulative energy on a fine grid spanning essentially the whole spectrum.
  const double fp = 1.0 / spec.tp;
  const double f_lo = 0.5 * fp, f_hi = 6.0 * fp;
  constexpr std::size_t kFine = 6000;
  std::vector<double> f(kFine + 1), cum(kFine + 1, 0.0);
  for (std::size_t i = 0; i <= kFine; ++i) {
    f[i] = f_lo + (f_hi - f_lo) * static_cast<double>(i) / kFine;
  }
  // Shape with unit Hs; the amplitudes carry the height.
  double prev = jonswap_density(f[0], 1.0, spec.tp);
  for (std::size_t i = 1; i <= kFine; ++i) {
    const double cur = jonswap_density(f[i], 1.0, spec.tp);
    cum[i] = cum[i - 1] + 0.5 * (prev + cur) * (f[i] - f[i - 1]);
    prev = cur;
  }
  const double total = cum.back();

  std::mt19937_64 rng(spec.seed);
  WaveRealization real;
  real.components.reserve(n_components);
  const double amplitude = std::sqrt(2.0 * (spec.hs * spec.hs / 16.0) / static_cast<double>(n_components));
  for (std::size_t k = 0; k < n_components; ++k) {
    // Each component sits at the energy median of its equal-energy bin.
    const double target = total * (static_cast<double>(k) + 0.5) / static_cast<double>(n_components);
    const auto it = std::lower_bound(cum.begin(), cum.end(), target);
    const auto j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - cum.begin()));
    const double t = (target - cum[j - 1]) / (cum[j] - cum[j - 1]);
    WaveComponent c;
    c.amplitude = amplitude;
    c.frequency = f[j - 1] + t * (f[j] - f[j - 1]);
    c.direction = spec.wave_dir;
    c.phase = kTwoPi * unit_uniform(rng);
    real.components.push_back(c);
  }
  return real;
}

hydro::ComplexVector6 interpolate_rao(const hydro::HydroDatabase & db, double f, double beta)
{
  if (!db.has_rao()) {
    throw RaoOutOfRange("database carries no force RAOs");
  }
  const auto & grid = db.freq;
  const double f0 = grid.front(), f1 = grid.back();
  if (f < f0 * (1.0 - kGridSlack) || f > f1 * (1.0 + kGridSlack)) {
    throw RaoOutOfRange(fmt::format("wave frequency {} Hz is outside the RAO grid [{}, {}] Hz", f, f0, f1));
  }
  std::size_t lo = 0, hi = 0;
  double wf = 0.0;
  if (f <= f0) {
    lo = hi = 0;
  } else if (f >= f1) {
    lo = hi = grid.size() - 1;
  } else {
    hi = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), f) - grid.begin());
    lo = hi - 1;
    wf = (f - grid[lo]) / (grid[hi] - grid[lo]);
  }
  const Bracket d = bracket_periodic(db.rao_directions, wrap_positive(beta));
  auto at_dir = [&](std::size_t fi) -> hydro::ComplexVector6 {
    return (1.0 - d.w) * db.rao_at(fi, d.lo) + d.w * db.rao_at(fi, d.hi);
  };
  if (lo == hi) {
    return at_dir(lo);
  }
  return (1.0 - wf) * at_dir(lo) + wf * at_dir(hi);
}

Vector6 wave_force(const WaveRealization & waves, const hydro::HydroDatabase & db, const hydro::Pose6 & eta, double t)
{
  Vector6 force = Vector6::Zero();
  for (const auto & c : waves.components) {
    if (c.amplitude == 0.0) {
      continue;
    }
    const double omega = kTwoPi * c.frequency;
    const double k = omega * omega / kGravity;
    const double theta =
      omega * t + k * (eta.x * std::cos(c.direction) + eta.y * std::sin(c.direction)) + c.phase;
    const hydro::ComplexVector6 x = interpolate_rao(db, c.frequency, c.direction - eta.psi);
    const std::complex<double> e = std::polar(1.0, theta);
    for (int i = 0; i < 6; ++i) {
      force(i) += c.amplitude * (x(i) * e).real();
    }
  }
  return force * 1e-3;
}

CoefficientTable::CoefficientTable(std::vector<Row> rows) : rows_(std::move(rows))
{
  if (rows_.size() < 2) {
    throw CoefficientTableError("a coefficient table needs at least two rows");
  }
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto & r = rows_[i];
    if (!std::isfinite(r.dir_deg) || !std::isfinite(r.cx) || !std::isfinite(r.cy) || !std::isfinite(r.cn)) {
      throw CoefficientTableError(fmt::format("row {} is not finite", i + 1));
    }
    if (r.dir_deg < 0.0 || r.dir_deg >= 360.0) {
      throw CoefficientTableError(fmt::format("row {}: direction {} deg outside [0, 360)", i + 1, r.dir_deg));
    }
    if (i > 0 && !(r.dir_deg > rows_[i - 1].dir_deg)) {
      throw CoefficientTableError(fmt::format("row {}: directions must be strictly increasing", i + 1));
    }
  }
}

CoefficientTable CoefficientTable::load(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw CoefficientTableError(fmt::format("cannot open {}", path.string()));
  }
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::string first;
    ss >> first;
    char * end = nullptr;
    const double dir = std::strtod(first.c_str(), &end);
    if (end == first.c_str()) {
      if (rows.empty()) {
        continue;  // header
      }
      throw CoefficientTableError(fmt::format("{}:{}: expected a number", path.string(), line_no));
    }
    Row r{dir, 0, 0, 0};
    if (!(ss >> r.cx >> r.cy >> r.cn)) {
      throw CoefficientTableError(fmt::format("{}:{}: expected 4 columns", path.string(), line_no));
    }
    rows.push_back(r);
  }
  try {
    return CoefficientTable(std::move(rows));
  } catch (const CoefficientTableError & e) {
    throw CoefficientTableError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

CoefficientTable CoefficientTable::sinusoidal(double cx0, double cy0, double cn0)
{
  std::vector<Row> rows;
  for (int d = 0; d < 360; d += 10) {
    const double b = deg2rad(d);
    rows.push_back({static_cast<double>(d), -cx0 * std::cos(b), -cy0 * std::sin(b), -cn0 * std::sin(2.0 * b)});
  }
  // Kill round-off so mirrored rows are exact negatives.
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t j = rows.size() - i;
    if (j <= i) {
      break;
    }
    rows[j].cx = rows[i].cx;
    rows[j].cy = -rows[i].cy;
    rows[j].cn = -rows[i].cn;
  }
  rows[0].cy = rows[0].cn = 0.0;
  rows[18].cy = rows[18].cn = 0.0;
  rows[9].cn = rows[27].cn = 0.0;
  rows[9].cx = rows[27].cx = 0.0;
  return CoefficientTable(std::move(rows));
}

Vector3 CoefficientTable::at(double beta) const
{
  if (rows_.empty()) {
    return Vector3::Zero();
  }
  std::vector<double> dirs(rows_.size());
  std::transform(rows_.begin(), rows_.end(), dirs.begin(), [](const Row & r) { return deg2rad(r.dir_deg); });
  const Bracket b = bracket_periodic(dirs, wrap_positive(beta));
  const Row & lo = rows_[b.lo];
  const Row & hi = rows_[b.hi];
  return {(1.0 - b.w) * lo.cx + b.w * hi.cx, (1.0 - b.w) * lo.cy + b.w * hi.cy, (1.0 - b.w) * lo.cn + b.w * hi.cn};
}

void CoefficientTable::save(const std::filesystem::path & path) const
{
  std::ofstream out(path);
  if (!out) {
    throw CoefficientTableError(fmt::format("cannot write {}", path.string()));
  }
  out << "direction_deg,cx,cy,cn\n";
  for (const auto & r : rows_) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", r.dir_deg, r.cx, r.cy, r.cn);
  }
}

WindCurrentModel st_wind_current_model()
{
  const hydro::HullParticulars hull;
  constexpr double kWindage = 15.0;  // m, mean height of the above-water profile
  WindCurrentModel m;
  m.wind.table = CoefficientTable::sinusoidal(0.7, 0.9, 0.1);
  m.wind.density = 1.225;
  m.wind.frontal_area = hull.breadth * kWindage;
  m.wind.lateral_area = hull.length * kWindage;
  m.wind.length = hull.length;
  m.current.table = CoefficientTable::sinusoidal(0.05, 0.6, 0.1);
  m.current.density = hull.water_density;
  m.current.frontal_area = hull.breadth * hull.draught;
  m.current.lateral_area = hull.length * hull.draught;
  m.current.length = hull.length;
  return m;
}

Vector3 drag_force(const DragModel & model, double speed, double dir, const hydro::Pose6 & eta,
                   const hydro::BodyVel6 & nu)
{
  // Medium velocity (flowing towards dir + pi) in the body frame, minus the hull's.
  const Eigen::Vector2d flow_ned(-speed * std::cos(dir), -speed * std::sin(dir));
  const Eigen::Vector2d rel = hydro::planar_rotation(eta.psi).transpose() * flow_ned - Eigen::Vector2d(nu.u, nu.v);
  const double v2 = rel.squaredNorm();
  if (v2 == 0.0) {
    return Vector3::Zero();
  }
  const double beta = std::atan2(-rel.y(), -rel.x());
  const Vector3 c = model.table.at(beta);
  const double q = 0.5 * model.density * v2;
  return 1e-3 * Vector3(q * c(0) * model.frontal_area, q * c(1) * model.lateral_area,
                        q * c(2) * model.lateral_area * model.length);
}

Vector6 wind_current_force(const EnvironmentSpec & spec, const WindCurrentModel & model, const hydro::Pose6 & eta,
                           const hydro::BodyVel6 & nu)
{
  Vector3 f = drag_force(model.wind, spec.wind_speed, spec.wind_dir, eta, nu) +
              drag_force(model.current, spec.current_speed, spec.current_dir, eta, nu);
  if (!model.drift.rows().empty() && spec.hs > 0.0) {
    f += model.drift.at(spec.wave_dir - eta.psi) * (spec.hs * spec.hs);
  }
  Vector6 out = Vector6::Zero();
  out(0) = f(0);
  out(1) = f(1);
  out(5) = f(2);
  return out;
}

}  // namespace dpsim::env
