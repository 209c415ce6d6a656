#include "dpsim/allocation/allocation.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "dpsim/allocation/qp.hpp"

namespace dpsim::alloc
{

namespace
{

constexpr double kFdStep = 1e-4;          // rad, singularity-term gradient
constexpr double kCurvatureFloor = 1e-6;  // quadratic model of |u|^1.5
constexpr double kRelaxedTrust = 0.35;    // rad, angle trust region without rate limits
constexpr int kLineSearchHalvings = 8;
constexpr double kUnbounded = std::numeric_limits<double>::infinity();

double power(double u) { return std::pow(std::abs(u), 1.5); }
double power_slope(double u) { return 1.5 * std::copysign(std::sqrt(std::abs(u)), u); }
double power_curvature(double u) { return std::max(kCurvatureFloor, 0.75 / std::sqrt(std::max(std::abs(u), 1.0))); }

double det_bbt(const Eigen::VectorXd & alpha, const ThrusterLayout & layout)
{
  const auto b = build_config_matrix(alpha, layout);
  return (b * b.transpose()).determinant();
}

double singularity_term(const Eigen::VectorXd & alpha, const ThrusterLayout & layout, const AllocationWeights & w)
{
  if (w.rho == 0.0) {
    return 0.0;
  }
  return w.rho / (w.epsilon + det_bbt(alpha, layout));
}

Eigen::VectorXd clamp(const Eigen::VectorXd & x, const Eigen::VectorXd & lo, const Eigen::VectorXd & hi)
{
  return x.cwiseMax(lo).cwiseMin(hi);
}

QpResult solve_or_throw(const QpProblem & qp, const Eigen::VectorXd & x0, const AllocationProblem & p)
{
  QpResult sol;
  try {
    sol = solve_qp(qp, x0);
  } catch (const QpError & e) {
    throw Infeasible(
      fmt::format("allocation subproblem failed: {} (tau = [{}, {}, {}])", e.what(), p.tau(0), p.tau(1), p.tau(2)));
  }
  // A non-optimal exit still returns a feasible point no worse than x0; the
  // outer line search decides whether it is used.
  return sol;
}

// Thrusts re-optimised with the angles held at `alpha` (the force map is then
// linear in u, so only the |u|^1.5 model about `centre` is approximate).
Eigen::VectorXd thrust_correction(const Eigen::VectorXd & alpha, const Eigen::VectorXd & centre,
                                  const AllocationProblem & p, const ThrusterLayout & layout, const StepBounds & bounds)
{
  const auto m = centre.size();
  const Eigen::Index n = m + 3;
  const auto b = build_config_matrix(alpha, layout);
  QpProblem qp;
  qp.H = Eigen::MatrixXd::Zero(n, n);
  qp.f = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double c = power_curvature(centre(i));
    qp.H(i, i) = c;
    qp.f(i) = power_slope(centre(i)) - c * centre(i);
  }
  for (int a = 0; a < 3; ++a) {
    qp.H(m + a, m + a) = 2.0 * p.weights.q(a);
  }
  qp.A_eq = Eigen::MatrixXd(3, n);
  qp.A_eq << b, Eigen::Matrix3d::Identity();
  qp.b_eq = p.tau;
  qp.A_in = Eigen::MatrixXd(0, n);
  qp.b_in = Eigen::VectorXd(0);
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -kUnbounded), hi = Eigen::VectorXd::Constant(n, kUnbounded);
  lo.head(m) = bounds.u_lo;
  hi.head(m) = bounds.u_hi;
  qp.add_bounds(lo, hi);
  Eigen::VectorXd x0(n);
  x0 << centre, p.tau - b * centre;
  return clamp(solve_or_throw(qp, x0, p).x.head(m), bounds.u_lo, bounds.u_hi);
}

void fill_result(AllocationResult & r, const AllocationProblem & p, const ThrusterLayout & layout)
{
  const auto b = build_config_matrix(r.alpha, layout);
  r.achieved = b * r.u;
  r.s = p.tau - r.achieved;
  r.det = (b * b.transpose()).determinant();
  r.objective = allocation_objective(r.u, r.alpha, p, layout);
}

std::vector<std::string> split_csv(const std::string & line)
{
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

ThrusterKind parse_thruster_kind(const std::string & s)
{
  if (s == "azimuth") {
    return ThrusterKind::azimuth;
  }
  if (s == "lateral") {
    return ThrusterKind::lateral;
  }
  if (s == "main") {
    return ThrusterKind::main;
  }
  throw LayoutError(fmt::format("unknown thruster kind '{}'", s));
}

std::string to_string(ThrusterKind k)
{
  switch (k) {
    case ThrusterKind::azimuth:
      return "azimuth";
    case ThrusterKind::lateral:
      return "lateral";
    case ThrusterKind::main:
      return "main";
  }
  return "?";
}

ThrusterLayout::ThrusterLayout(std::vector<Thruster> thrusters) : thrusters_(std::move(thrusters))
{
  if (thrusters_.empty()) {
    throw LayoutError("a layout needs at least one thruster");
  }
  for (auto & t : thrusters_) {
    const bool finite = std::isfinite(t.lx) && std::isfinite(t.ly) && std::isfinite(t.u_min) &&
                        std::isfinite(t.u_max) && std::isfinite(t.du_rate) && std::isfinite(t.dalpha_rate) &&
                        std::isfinite(t.alpha_init);
    if (!finite) {
      throw LayoutError(fmt::format("thruster {}: non-finite field", t.name));
    }
    if (!(t.u_min <= 0.0 && 0.0 <= t.u_max && t.u_min < t.u_max)) {
      throw LayoutError(fmt::format("thruster {}: need u_min <= 0 <= u_max, got [{}, {}]", t.name, t.u_min, t.u_max));
    }
    if (!(t.du_rate > 0.0)) {
      throw LayoutError(fmt::format("thruster {}: thrust rate must be positive", t.name));
    }
    if (t.kind == ThrusterKind::lateral) {
      t.alpha_init = kPi / 2.0;
    } else if (t.kind == ThrusterKind::main) {
      t.alpha_init = 0.0;
    }
    if (t.fixed_angle()) {
      t.alpha_min = t.alpha_max = t.alpha_init;
      t.dalpha_rate = 0.0;
    } else {
      if (!(t.alpha_min < t.alpha_max) || !(t.dalpha_rate > 0.0)) {
        throw LayoutError(fmt::format("thruster {}: azimuth needs alpha_min < alpha_max and a positive turn rate",
                                      t.name));
      }
      if (t.alpha_init < t.alpha_min || t.alpha_init > t.alpha_max) {
        throw LayoutError(fmt::format("thruster {}: initial angle outside its limits", t.name));
      }
    }
  }
}

ThrusterLayout ThrusterLayout::shuttle_tanker()
{
  // Thrust rates take each unit from zero to full in 2 s; azimuths turn at 10 deg/s.
  const double turn = deg2rad(10.0);
  return ThrusterLayout({
    {"No.1", ThrusterKind::lateral, 60.59, 0.0, -246.0, 246.0, 123.0, 0.0, 0.0, 0.0, kPi / 2.0},
    {"No.2", ThrusterKind::azimuth, 57.00, 0.0, -275.0, 275.0, 137.5, -kPi, kPi, turn, kPi / 2.0},
    {"No.3", ThrusterKind::azimuth, -40.34, 0.0, -275.0, 275.0, 137.5, -kPi, kPi, turn, kPi / 2.0},
    {"No.4", ThrusterKind::main, -61.17, 0.0, 0.0, 480.0, 240.0, 0.0, 0.0, 0.0, 0.0},
  });
}

ThrusterLayout ThrusterLayout::load(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw LayoutError(fmt::format("cannot open {}", path.string()));
  }
  std::vector<Thruster> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto cells = split_csv(line);
    if (!header_seen && !cells.empty() && cells[0] == "name") {
      header_seen = true;
      continue;
    }
    if (cells.size() != 11) {
      throw LayoutError(fmt::format("{}:{}: expected 11 columns, got {}", path.string(), line_no, cells.size()));
    }
    auto num = [&](std::size_t i) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size()) {
          throw std::invalid_argument("trailing");
        }
        return v;
      } catch (const std::exception &) {
        throw LayoutError(fmt::format("{}:{}: column {} is not a number: '{}'", path.string(), line_no, i + 1,
                                      cells[i]));
      }
    };
    Thruster t;
    t.name = cells[0];
    try {
      t.kind = parse_thruster_kind(cells[1]);
    } catch (const LayoutError & e) {
      throw LayoutError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    t.lx = num(2);
    t.ly = num(3);
    t.u_min = num(4);
    t.u_max = num(5);
    t.du_rate = num(6);
    t.alpha_min = deg2rad(num(7));
    t.alpha_max = deg2rad(num(8));
    t.dalpha_rate = deg2rad(num(9));
    t.alpha_init = deg2rad(num(10));
    out.push_back(t);
  }
  return ThrusterLayout(std::move(out));
}

void ThrusterLayout::save(const std::filesystem::path & path) const
{
  std::ofstream out(path);
  if (!out) {
    throw LayoutError(fmt::format("cannot write {}", path.string()));
  }
  out << "name,kind,x,y,u_min,u_max,du_rate,alpha_min_deg,alpha_max_deg,dalpha_rate_deg,alpha_init_deg\n";
  for (const auto & t : thrusters_) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", t.name, to_string(t.kind), t.lx, t.ly, t.u_min, t.u_max,
                       t.du_rate, rad2deg(t.alpha_min), rad2deg(t.alpha_max), rad2deg(t.dalpha_rate),
                       rad2deg(t.alpha_init));
  }
}

Eigen::VectorXd ThrusterLayout::initial_angles() const
{
  Eigen::VectorXd a(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    a(static_cast<Eigen::Index>(i)) = thrusters_[i].alpha_init;
  }
  return a;
}

Eigen::VectorXd ThrusterLayout::u_min() const
{
  Eigen::VectorXd a(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    a(static_cast<Eigen::Index>(i)) = thrusters_[i].u_min;
  }
  return a;
}

Eigen::VectorXd ThrusterLayout::u_max() const
{
  Eigen::VectorXd a(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    a(static_cast<Eigen::Index>(i)) = thrusters_[i].u_max;
  }
  return a;
}

Vector3 ThrusterLayout::capability() const
{
  Vector3 cap = Vector3::Zero();
  for (const auto & t : thrusters_) {
    const double umax = std::max(-t.u_min, t.u_max);
    Vector3 best = Vector3::Zero();
    const int n = t.fixed_angle() ? 1 : 721;
    for (int k = 0; k < n; ++k) {
      const double a = n == 1 ? t.alpha_init : t.alpha_min + (t.alpha_max - t.alpha_min) * k / (n - 1);
      const Vector3 col(std::cos(a), std::sin(a), -t.ly * std::cos(a) + t.lx * std::sin(a));
      best = best.cwiseMax(col.cwiseAbs());
    }
    cap += umax * best;
  }
  return cap;
}

ThrusterLayout ThrusterLayout::scaled(double length, double force, double time) const
{
  std::vector<Thruster> out = thrusters_;
  for (auto & t : out) {
    t.lx /= length;
    t.ly /= length;
    t.u_min /= force;
    t.u_max /= force;
    t.du_rate /= force / time;
    t.dalpha_rate *= time;
  }
  return ThrusterLayout(std::move(out));
}

Eigen::Matrix<double, 3, Eigen::Dynamic> build_config_matrix(const Eigen::VectorXd & alpha,
                                                             const ThrusterLayout & layout)
{
  if (static_cast<std::size_t>(alpha.size()) != layout.size()) {
    throw std::invalid_argument(fmt::format("{} angles for {} thrusters", alpha.size(), layout.size()));
  }
  Eigen::Matrix<double, 3, Eigen::Dynamic> b(3, alpha.size());
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    const auto & t = layout[static_cast<std::size_t>(j)];
    const double c = std::cos(alpha(j)), s = std::sin(alpha(j));
    b(0, j) = c;
    b(1, j) = s;
    b(2, j) = -t.ly * c + t.lx * s;
  }
  return b;
}

void AllocationWeights::validate() const
{
  if (!q.allFinite() || (q.array() < 0.0).any() || !(omega_angle >= 0.0) || !(rho >= 0.0) || !(epsilon > 0.0) ||
      iterations < 1) {
    throw std::invalid_argument("allocation weights: need Q, Omega >= 0, rho >= 0, epsilon > 0, iterations >= 1");
  }
}

StepBounds step_bounds(const AllocationProblem & p, const ThrusterLayout & layout)
{
  const auto m = static_cast<Eigen::Index>(layout.size());
  if (p.u0.size() != m || p.alpha0.size() != m) {
    throw std::invalid_argument(
      fmt::format("previous solution has {} thrusts / {} angles for {} thrusters", p.u0.size(), p.alpha0.size(), m));
  }
  StepBounds b{Eigen::VectorXd(m), Eigen::VectorXd(m), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  const bool rates = p.step > 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto & t = layout[static_cast<std::size_t>(i)];
    const double u0 = std::clamp(p.u0(i), t.u_min, t.u_max);
    b.u_lo(i) = rates ? std::max(t.u_min, u0 - t.du_rate * p.step) : t.u_min;
    b.u_hi(i) = rates ? std::min(t.u_max, u0 + t.du_rate * p.step) : t.u_max;
    if (t.fixed_angle()) {
      b.a_lo(i) = b.a_hi(i) = t.alpha_init;
    } else {
      const double a0 = std::clamp(p.alpha0(i), t.alpha_min, t.alpha_max);
      b.a_lo(i) = rates ? std::max(t.alpha_min, a0 - t.dalpha_rate * p.step) : t.alpha_min;
      b.a_hi(i) = rates ? std::min(t.alpha_max, a0 + t.dalpha_rate * p.step) : t.alpha_max;
    }
  }
  return b;
}

double allocation_objective(const Eigen::VectorXd & u, const Eigen::VectorXd & alpha, const AllocationProblem & p,
                            const ThrusterLayout & layout)
{
  const auto b = build_config_matrix(alpha, layout);
  const Vector3 s = p.tau - b * u;
  double j = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    j += power(u(i));
    if (!layout[static_cast<std::size_t>(i)].fixed_angle()) {
      const double da = alpha(i) - p.alpha0(i);
      j += p.weights.omega_angle * da * da;
    }
  }
  j += s.dot(p.weights.q.cwiseProduct(s));
  if (p.weights.rho > 0.0) {
    j += p.weights.rho / (p.weights.epsilon + (b * b.transpose()).determinant());
  }
  return j;
}

AllocationResult allocate(const AllocationProblem & p, const ThrusterLayout & layout)
{
  p.weights.validate();
  const StepBounds bounds = step_bounds(p, layout);
  const auto m = static_cast<Eigen::Index>(layout.size());
  std::vector<Eigen::Index> az;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!layout[static_cast<std::size_t>(i)].fixed_angle()) {
      az.push_back(i);
    }
  }
  const auto na = static_cast<Eigen::Index>(az.size());
  const Eigen::Index n = m + na + 3;
  const bool relaxed = p.step <= 0.0;
  double trust = relaxed ? kRelaxedTrust : kUnbounded;

  AllocationResult r;
  r.u = clamp(p.u0, bounds.u_lo, bounds.u_hi);
  r.alpha = clamp(p.alpha0, bounds.a_lo, bounds.a_hi);
  double j_cur = allocation_objective(r.u, r.alpha, p, layout);
  r.history.push_back(j_cur);

  for (int it = 0; it < p.weights.iterations; ++it) {
    const auto b = build_config_matrix(r.alpha, layout);
    QpProblem qp;
    qp.H = Eigen::MatrixXd::Zero(n, n);
    qp.f = Eigen::VectorXd::Zero(n);
    qp.A_eq = Eigen::MatrixXd::Zero(3, n);
    qp.b_eq = p.tau;
    qp.A_eq.leftCols(m) = b;
    qp.A_eq.rightCols(3) = Eigen::Matrix3d::Identity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double c = power_curvature(r.u(i));
      qp.H(i, i) = c;
      qp.f(i) = power_slope(r.u(i)) - c * r.u(i);
    }
    const double sing = singularity_term(r.alpha, layout, p.weights);
    for (Eigen::Index k = 0; k < na; ++k) {
      const Eigen::Index j = az[static_cast<std::size_t>(k)];
      const auto & t = layout[static_cast<std::size_t>(j)];
      const double ca = std::cos(r.alpha(j)), sa = std::sin(r.alpha(j));
      // d(B_j u_j)/d alpha_j at the current thrust.
      qp.A_eq.col(m + k) = r.u(j) * Vector3(-sa, ca, t.ly * sa + t.lx * ca);
      Eigen::VectorXd ap = r.alpha, am = r.alpha;
      ap(j) += kFdStep;
      am(j) -= kFdStep;
      const double sp = singularity_term(ap, layout, p.weights), sm = singularity_term(am, layout, p.weights);
      const double grad = (sp - sm) / (2.0 * kFdStep);
      const double bend = (sp - 2.0 * sing + sm) / (kFdStep * kFdStep);
      // Convex parts of the Lagrangian curvature: force map (multiplier 2 Q s) and barrier.
      const Vector3 lambda = 2.0 * p.weights.q.cwiseProduct(p.tau - b * r.u);
      const double curv = lambda.dot(b.col(j) * r.u(j));
      qp.H(m + k, m + k) = 2.0 * p.weights.omega_angle + 1e-9 + std::max(0.0, curv) + std::max(0.0, bend);
      qp.f(m + k) = 2.0 * p.weights.omega_angle * (r.alpha(j) - p.alpha0(j)) + grad;
    }
    for (int a = 0; a < 3; ++a) {
      qp.H(m + na + a, m + na + a) = 2.0 * p.weights.q(a);
    }

    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -kUnbounded), hi = Eigen::VectorXd::Constant(n, kUnbounded);
    lo.head(m) = bounds.u_lo;
    hi.head(m) = bounds.u_hi;
    for (Eigen::Index k = 0; k < na; ++k) {
      const Eigen::Index j = az[static_cast<std::size_t>(k)];
      lo(m + k) = std::max(bounds.a_lo(j) - r.alpha(j), -trust);
      hi(m + k) = std::min(bounds.a_hi(j) - r.alpha(j), trust);
    }
    qp.A_in = Eigen::MatrixXd(0, n);
    qp.b_in = Eigen::VectorXd(0);
    qp.add_bounds(lo, hi);

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    x0.head(m) = r.u;
    x0.tail(3) = p.tau - b * r.u;
    const QpResult sol = solve_or_throw(qp, x0, p);

    const Eigen::VectorXd du = sol.x.head(m) - r.u;
    Eigen::VectorXd da = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < na; ++k) {
      da(az[static_cast<std::size_t>(k)]) = sol.x(m + k);
    }
    bool accepted = false;
    double t = 1.0;
    Eigen::VectorXd u_new, a_new;
    double j_new = j_cur;
    for (int ls = 0; ls <= kLineSearchHalvings; ++ls, t *= 0.5) {
      u_new = clamp(r.u + t * du, bounds.u_lo, bounds.u_hi);
      a_new = clamp(r.alpha + t * da, bounds.a_lo, bounds.a_hi);
      j_new = allocation_objective(u_new, a_new, p, layout);
      if (na > 0) {
        // Second-order correction: the linearised force map misses the
        // curvature in alpha, which the heavy slack weight would punish.
        const Eigen::VectorXd u_corr = thrust_correction(a_new, u_new, p, layout, bounds);
        const double j_corr = allocation_objective(u_corr, a_new, p, layout);
        if (j_corr < j_new) {
          u_new = u_corr;
          j_new = j_corr;
        }
      }
      if (j_new <= j_cur) {
        accepted = true;
        break;
      }
    }
    r.iterations = it + 1;
    if (!accepted) {
      if (relaxed && trust > 1e-6) {
        trust *= 0.25;
        continue;
      }
      r.converged = true;
      break;
    }
    const double gain = j_cur - j_new;
    const double moved = du.lpNorm<Eigen::Infinity>() + da.lpNorm<Eigen::Infinity>() * 100.0;
    if (relaxed && t == 1.0) {
      trust = std::min(kRelaxedTrust, 2.0 * trust);
    }
    r.u = u_new;
    r.alpha = a_new;
    j_cur = j_new;
    r.history.push_back(j_cur);
    if (gain <= 1e-12 * (1.0 + std::abs(j_cur)) || t * moved <= 1e-9) {
      r.converged = true;
      break;
    }
  }
  fill_result(r, p, layout);
  return r;
}

AllocationResult allocate_pseudoinverse(const AllocationProblem & p, const ThrusterLayout & layout)
{
  p.weights.validate();
  const StepBounds bounds = step_bounds(p, layout);
  AllocationResult r;
  r.alpha = clamp(p.alpha0, bounds.a_lo, bounds.a_hi);
  const auto b = build_config_matrix(r.alpha, layout);
  const Eigen::VectorXd u = b.completeOrthogonalDecomposition().solve(p.tau);
  r.u = clamp(u, bounds.u_lo, bounds.u_hi);
  r.iterations = 1;
  r.converged = true;
  fill_result(r, p, layout);
  r.history = {r.objective};
  return r;
}

bool satisfies_constraints(const AllocationResult & r, const AllocationProblem & p, const ThrusterLayout & layout,
                           double tol)
{
  const StepBounds b = step_bounds(p, layout);
  for (Eigen::Index i = 0; i < r.u.size(); ++i) {
    const auto & t = layout[static_cast<std::size_t>(i)];
    if (r.u(i) < b.u_lo(i) - tol || r.u(i) > b.u_hi(i) + tol || r.u(i) < t.u_min - tol || r.u(i) > t.u_max + tol) {
      return false;
    }
    if (r.alpha(i) < b.a_lo(i) - tol || r.alpha(i) > b.a_hi(i) + tol) {
      return false;
    }
  }
  return true;
}

}  // namespace dpsim::alloc
