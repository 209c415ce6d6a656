#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "dpsim/allocation/allocation.hpp"
#include "dpsim/allocation/qp.hpp"
#include "support/oracles.hpp"

using namespace dpsim;
using namespace dpsim::alloc;
using oracle::grid_optimum;
using oracle::st_matrix;

namespace
{

AllocationProblem at_rest(const ThrusterLayout & layout, const Vector3 & tau, double step = 0.5)
{
  AllocationProblem p;
  p.tau = tau;
  p.u0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  p.alpha0 = layout.initial_angles();
  p.step = step;
  return p;
}

bool non_increasing(const std::vector<double> & h)
{
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i] > h[i - 1]) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("QP solver matches exhaustive active-set enumeration on random box QPs")
{
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        m(i, j) = nd(rng);
      }
    }
    QpProblem p;
    p.H = m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    p.f = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) {
      p.f(i) = 3.0 * nd(rng);
    }
    p.A_eq = Eigen::MatrixXd(1, n);
    p.A_eq.setOnes();
    p.b_eq = Eigen::VectorXd::Constant(1, 0.3);
    p.A_in = Eigen::MatrixXd(0, n);
    p.b_in = Eigen::VectorXd(0);
    p.add_bounds(Eigen::VectorXd::Constant(n, -1.0), Eigen::VectorXd::Constant(n, 1.0));
    const QpResult r = solve_qp(p, Eigen::VectorXd::Constant(n, 0.3 / n));
    REQUIRE(r.optimal);

    // Oracle: each variable at its lower bound, upper bound or free.
    double best = std::numeric_limits<double>::infinity();
    for (int code = 0; code < 81; ++code) {
      int c = code;
      std::vector<int> state(n);
      for (int i = 0; i < n; ++i) {
        state[i] = c % 3;
        c /= 3;
      }
      std::vector<int> fixed_rows;
      Eigen::VectorXd fixed_val(n);
      for (int i = 0; i < n; ++i) {
        if (state[i] != 2) {
          fixed_rows.push_back(i);
          fixed_val(i) = state[i] == 0 ? -1.0 : 1.0;
        }
      }
      const int k = 1 + static_cast<int>(fixed_rows.size());
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, n);
      Eigen::VectorXd b(k);
      a.row(0).setOnes();
      b(0) = 0.3;
      for (int r2 = 0; r2 < k - 1; ++r2) {
        a(r2 + 1, fixed_rows[r2]) = 1.0;
        b(r2 + 1) = fixed_val(fixed_rows[r2]);
      }
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
      kkt.topLeftCorner(n, n) = p.H;
      kkt.topRightCorner(n, k) = a.transpose();
      kkt.bottomLeftCorner(k, n) = a;
      Eigen::VectorXd rhs(n + k);
      rhs.head(n) = -p.f;
      rhs.tail(k) = b;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (lu.rank() < n + k) {
        continue;
      }
      const Eigen::VectorXd x = lu.solve(rhs).head(n);
      if ((x.array() < -1.0 - 1e-9).any() || (x.array() > 1.0 + 1e-9).any()) {
        continue;
      }
      best = std::min(best, p.objective(x));
    }
    CHECK(p.objective(r.x) == doctest::Approx(best).epsilon(1e-9));
    CHECK(p.violation(r.x) <= 1e-9);
    CHECK((r.multipliers_in.array() >= 0.0).all());
  }
}

TEST_CASE("QP solver rejects an infeasible start and mismatched dimensions")
{
  QpProblem p;
  p.H = Eigen::MatrixXd::Identity(2, 2);
  p.f = Eigen::VectorXd::Zero(2);
  p.A_eq = Eigen::MatrixXd(0, 2);
  p.b_eq = Eigen::VectorXd(0);
  p.A_in = Eigen::MatrixXd(0, 2);
  p.b_in = Eigen::VectorXd(0);
  p.add_bounds(Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Constant(2, 2.0));
  CHECK_THROWS_AS((void)solve_qp(p, Eigen::VectorXd::Zero(2)), QpError);
  CHECK_THROWS_AS((void)solve_qp(p, Eigen::VectorXd::Zero(3)), QpError);
  const QpResult r = solve_qp(p, Eigen::VectorXd::Constant(2, 1.5));
  CHECK(r.optimal);
  CHECK(r.x(0) == doctest::Approx(1.0));
  CHECK(r.x(1) == doctest::Approx(1.0));
}

TEST_CASE("configuration matrix columns")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  const auto b = build_config_matrix(layout.initial_angles(), layout);
  CHECK(std::abs(b(0, 0)) < 1e-15);
  CHECK(b(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b(2, 0) == doctest::Approx(60.59).epsilon(1e-15));
  // Main thruster at 0 deg on the centreline.
  CHECK(b(0, 3) == 1.0);
  CHECK(b(1, 3) == 0.0);
  CHECK(b(2, 3) == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-kPi, kPi);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd a = layout.initial_angles();
    a(1) = ud(rng);
    a(2) = ud(rng);
    const auto bk = build_config_matrix(a, layout);
    for (int j = 0; j < 4; ++j) {
      CHECK(bk.col(j).head<2>().norm() == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK((bk - st_matrix(a(1), a(2))).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS((void)build_config_matrix(Eigen::VectorXd::Zero(3), layout), std::invalid_argument);
}

TEST_CASE("layout limits, capability and CSV round trip")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  REQUIRE(layout.size() == 4);
  CHECK(layout[0].u_max == 246.0);
  CHECK(layout[1].u_max == 275.0);
  CHECK(layout[3].u_min == 0.0);
  CHECK(layout[3].u_max == 480.0);
  const Vector3 cap = layout.capability();
  CHECK(cap(0) == doctest::Approx(275.0 + 275.0 + 480.0));
  CHECK(cap(1) == doctest::Approx(246.0 + 275.0 + 275.0));
  CHECK(cap(2) == doctest::Approx(246.0 * 60.59 + 275.0 * 57.00 + 275.0 * 40.34));

  const auto path = std::filesystem::temp_directory_path() / "dpsim_layout_test.csv";
  layout.save(path);
  const auto back = ThrusterLayout::load(path);
  REQUIRE(back.size() == layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    CHECK(back[i].name == layout[i].name);
    CHECK(back[i].kind == layout[i].kind);
    CHECK(back[i].lx == doctest::Approx(layout[i].lx));
    CHECK(back[i].u_max == doctest::Approx(layout[i].u_max));
    CHECK(back[i].dalpha_rate == doctest::Approx(layout[i].dalpha_rate));
    CHECK(back[i].alpha_init == doctest::Approx(layout[i].alpha_init));
  }

  const auto shipped = ThrusterLayout::load(std::filesystem::path(DPSIM_DATA_DIR) / "st_layout.csv");
  REQUIRE(shipped.size() == 4);
  CHECK(shipped.capability().isApprox(cap, 1e-12));

  std::ofstream(path) << "name,kind,x,y,u_min,u_max,du_rate,alpha_min_deg,alpha_max_deg,dalpha_rate_deg,alpha_init_deg\n"
                      << "T,pod,0,0,-1,1,1,0,0,0,0\n";
  CHECK_THROWS_AS((void)ThrusterLayout::load(path), LayoutError);
  std::ofstream(path) << "T,main,0,0,5,10,1,0,0,0,0\n";
  CHECK_THROWS_AS((void)ThrusterLayout::load(path), LayoutError);
  std::ofstream(path) << "T,main,0,0,0,10\n";
  CHECK_THROWS_AS((void)ThrusterLayout::load(path), LayoutError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ThrusterLayout(std::vector<Thruster>{}), LayoutError);
}

TEST_CASE("zero demand without the singularity term gives the zero solution")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  auto p = at_rest(layout, Vector3::Zero());
  p.weights.rho = 0.0;
  const auto r = allocate(p, layout);
  CHECK(r.u.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.alpha == p.alpha0);
  CHECK(r.s.norm() == 0.0);
  CHECK(r.objective == 0.0);
}

TEST_CASE("single main thruster meets a surge demand")
{
  const ThrusterLayout layout({{"main", ThrusterKind::main, -61.17, 0.0, 0.0, 480.0, 48.0, 0.0, 0.0, 0.0, 0.0}});
  auto p = at_rest(layout, Vector3(100.0, 0.0, 0.0), 0.0);
  p.weights.iterations = 20;
  const auto r = allocate(p, layout);
  // Stationarity of u^1.5 + q (100 - u)^2 solved by bisection.
  double lo = 90.0, hi = 100.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (1.5 * std::sqrt(mid) - 2.0 * 1e4 * (100.0 - mid) > 0.0 ? hi : lo) = mid;
  }
  CHECK(r.u(0) == doctest::Approx(lo).epsilon(1e-9));
  CHECK(r.u(0) == doctest::Approx(100.0).epsilon(1e-5));
  CHECK(std::abs(r.s(0)) < 1e-3);
  CHECK(r.s(1) == 0.0);
}

TEST_CASE("allocation objective is within 5% of the exhaustive grid optimum")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> fx(-300.0, 300.0), fn(-8000.0, 8000.0);
  std::vector<Vector3> demands{Vector3(200.0, 300.0, 5000.0)};
  for (int k = 0; k < 20; ++k) {
    demands.emplace_back(fx(rng), fx(rng), fn(rng));
  }
  for (const auto & tau : demands) {
    auto p = at_rest(layout, tau, 0.0);
    p.weights.iterations = 100;
    const auto r = allocate(p, layout);
    const auto g = grid_optimum(tau, p.alpha0, p.weights);
    INFO("tau = " << tau.transpose() << "  J = " << r.objective << "  grid = " << g.j);
    CHECK(r.objective <= 1.05 * g.j);
    CHECK(satisfies_constraints(r, p, layout));
    CHECK(non_increasing(r.history));
  }
}

TEST_CASE("slack is the exact residual and J never increases")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> fx(-1200.0, 1200.0), fn(-50000.0, 50000.0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(4), a = layout.initial_angles();
  for (int k = 0; k < 300; ++k) {
    AllocationProblem p;
    p.tau = Vector3(fx(rng), fx(rng), fn(rng));
    p.u0 = u;
    p.alpha0 = a;
    const auto r = allocate(p, layout);
    const Vector3 residual = p.tau - st_matrix(r.alpha(1), r.alpha(2)) * r.u;
    CHECK((residual - r.s).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((r.achieved + r.s - p.tau).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(non_increasing(r.history));
    CHECK(r.history.front() >= r.objective);
    CHECK(satisfies_constraints(r, p, layout));
    u = r.u;
    a = r.alpha;
  }
}

TEST_CASE("rate limits bound every step")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  auto p = at_rest(layout, Vector3(900.0, -700.0, 30000.0), 0.5);
  const auto r = allocate(p, layout);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(r.u(i) - p.u0(i)) <= layout[i].du_rate * 0.5 + 1e-12);
    CHECK(std::abs(r.alpha(i) - p.alpha0(i)) <= layout[i].dalpha_rate * 0.5 + 1e-12);
  }
  CHECK(r.alpha(0) == kPi / 2.0);
  CHECK(r.alpha(3) == 0.0);
  CHECK(satisfies_constraints(r, p, layout));
  // An out-of-range answer is detected.
  auto bad = r;
  bad.u(1) = p.u0(1) + layout[1].du_rate * 0.5 + 1.0;
  CHECK_FALSE(satisfies_constraints(bad, p, layout));
}

TEST_CASE("singularity term keeps the azimuths out of the aligned configuration")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  // Both azimuths along the hull axis: only the two fixed units and the
  // surge-aligned azimuths remain, det(B B^T) = 0.
  CHECK(std::abs((st_matrix(0.0, 0.0) * st_matrix(0.0, 0.0).transpose()).determinant()) < 1e-6);

  // Starting at 90 deg and pushed by a pure surge demand, the azimuths
  // rotate toward 0. The barrier has to outweigh the slack penalty while the
  // thrusts ramp up, hence the large rho; without it det collapses.
  auto run = [&](double rho) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd a = layout.initial_angles();
    double det_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 400; ++k) {
      AllocationProblem p;
      p.tau = Vector3(800.0, 0.0, 0.0);
      p.u0 = u;
      p.alpha0 = a;
      p.weights.rho = rho;
      const auto r = allocate(p, layout);
      det_min = std::min(det_min, r.det);
      u = r.u;
      a = r.alpha;
    }
    return det_min;
  };
  const Eigen::VectorXd a0 = layout.initial_angles();
  const double det0 = (st_matrix(a0(1), a0(2)) * st_matrix(a0(1), a0(2)).transpose()).determinant();
  CHECK(run(1e8) >= 1e-3 * det0);
  CHECK(run(0.0) < 1e-3 * det0);
}

TEST_CASE("pseudoinverse slot holds the angles and clips to the limits")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  auto p = at_rest(layout, Vector3(0.0, 100.0, 0.0), 0.0);
  const auto r = allocate_pseudoinverse(p, layout);
  CHECK(r.alpha == p.alpha0);
  CHECK(satisfies_constraints(r, p, layout));
  CHECK((r.achieved + r.s - p.tau).norm() < 1e-9);
  CHECK(r.s.norm() < 1e-6);
  p.tau = Vector3(5000.0, 0.0, 0.0);
  const auto big = allocate_pseudoinverse(p, layout);
  CHECK(satisfies_constraints(big, p, layout));
  CHECK(big.s(0) > 0.0);
}

TEST_CASE("invalid weights are rejected")
{
  const auto layout = ThrusterLayout::shuttle_tanker();
  auto p = at_rest(layout, Vector3::Zero());
  p.weights.epsilon = 0.0;
  CHECK_THROWS_AS((void)allocate(p, layout), std::invalid_argument);
  p = at_rest(layout, Vector3::Zero());
  p.weights.iterations = 0;
  CHECK_THROWS_AS((void)allocate(p, layout), std::invalid_argument);
  p = at_rest(layout, Vector3::Zero());
  p.u0 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS((void)allocate(p, layout), std::invalid_argument);
}
