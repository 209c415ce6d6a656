#include <doctest.h>

#include <random>

#include "dpsim/hydro/dynamics.hpp"
#include "dpsim/hydro/synthetic.hpp"

using namespace dpsim;
using namespace dpsim::hydro;

namespace
{

HydroDatabase st_no_restoring()
{
  auto db = st_hull_database();
  db.restoring.setZero();
  return db;
}

Matrix6 diag_a_inf()
{
  const auto spec = st_hull_spec();
  Matrix6 a = Matrix6::Zero();
  for (int i = 0; i < 6; ++i) {
    a(i, i) = spec.added_mass_inf[static_cast<std::size_t>(i)];
  }
  return a;
}

}  // namespace

TEST_CASE("zero forces keep a resting hull at rest")
{
  const auto model = VesselModel::build(st_hull_database(), 60.0, 0.5);
  auto s = make_state(model, 0.0, Pose6{}, BodyVel6{});
  for (int k = 0; k < 200; ++k) {
    s = step_dynamics(s, model, Vector6::Zero(), Vector6::Zero(), 0.5);
  }
  CHECK(s.eta.vec().norm() == 0.0);
  CHECK(s.nu.vec().norm() == 0.0);
  CHECK(s.t == doctest::Approx(100.0));
}

TEST_CASE("constant surge force accelerates linearly")
{
  const auto db = st_no_restoring();
  const VesselModel model(db, RetardationKernel::zero(60.0, 0.5), diag_a_inf());
  auto s = make_state(model, 0.0, Pose6{}, BodyVel6{});
  Vector6 f = Vector6::Zero();
  f(0) = 100.0;  // kN
  for (int k = 0; k < 100; ++k) {
    s = step_dynamics(s, model, f, Vector6::Zero(), 0.5);
  }
  const double expected = 100e3 * 50.0 / (db.rigid_mass(0, 0) + diag_a_inf()(0, 0));
  CHECK(s.nu.u == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.eta.x == doctest::Approx(0.5 * expected * 50.0).epsilon(1e-12));
}

TEST_CASE("undamped heave oscillates at the hydrostatic natural frequency")
{
  auto db = st_hull_database();
  Matrix6 c = Matrix6::Zero();
  c(2, 2) = db.restoring(2, 2);
  db.restoring = c;
  const Matrix6 a_inf = diag_a_inf();
  const double omega = std::sqrt(c(2, 2) / (db.rigid_mass(2, 2) + a_inf(2, 2)));
  const double period = 2.0 * kPi / omega;
  const double h = period / 100.0;
  const VesselModel model(db, RetardationKernel::zero(60.0, h), a_inf);

  Pose6 eta;
  eta.z = 1.0;
  auto s = make_state(model, 0.0, eta, BodyVel6{});
  std::vector<double> up_crossings;
  double peak = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto prev = s;
    s = step_dynamics(s, model, Vector6::Zero(), Vector6::Zero(), h);
    if (prev.eta.z < 0.0 && s.eta.z >= 0.0) {
      up_crossings.push_back(prev.t + h * (-prev.eta.z) / (s.eta.z - prev.eta.z));
    }
    if (k >= 900) {
      peak = std::max(peak, std::abs(s.eta.z));
    }
  }
  REQUIRE(up_crossings.size() >= 9);
  const double measured = (up_crossings.back() - up_crossings.front()) / static_cast<double>(up_crossings.size() - 1);
  CHECK(std::abs(measured - period) / period < 5e-3);
  CHECK(std::abs(peak - 1.0) < 5e-3);
}

TEST_CASE("memory force is linear in the velocity history")
{
  const auto model = VesselModel::build(st_hull_database(), 60.0, 0.5);
  std::mt19937 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  VelocityHistory a(model.kernel().samples()), b(model.kernel().samples()), sum(model.kernel().samples());
  for (std::size_t k = 0; k < a.size(); ++k) {
    Vector6 va, vb;
    for (int i = 0; i < 6; ++i) {
      va(i) = n(rng);
      vb(i) = n(rng);
    }
    a.push(va);
    b.push(vb);
    sum.push(va + vb);
  }
  const Vector6 fa = model.memory_force(a), fb = model.memory_force(b), fs = model.memory_force(sum);
  CHECK((fs - fa - fb).norm() <= 1e-9 * fs.norm());
}

TEST_CASE("next state depends only on the last Tc of history")
{
  const auto model = VesselModel::build(st_hull_database(), 60.0, 0.5);
  const std::size_t n = model.kernel().samples();
  VesselState s1 = make_state(model, 0.0, Pose6{}, BodyVel6{});
  VesselState s2 = s1;
  // Different pasts, identical window [t - Tc, t].
  s1.history.push((Vector6() << 5, 5, 5, 5, 5, 5).finished());
  s2.history.push((Vector6() << -3, 1, 0, 2, 9, -1).finished());
  for (std::size_t k = 0; k < n; ++k) {
    const Vector6 v = 0.01 * Vector6::Constant(std::sin(0.1 * static_cast<double>(k)));
    s1.history.push(v);
    s2.history.push(v);
  }
  s1.nu = s2.nu = BodyVel6::from(s1.history.lag(0));
  const auto n1 = step_dynamics(s1, model, Vector6::Ones(), Vector6::Zero(), 0.5);
  const auto n2 = step_dynamics(s2, model, Vector6::Ones(), Vector6::Zero(), 0.5);
  CHECK((n1.eta.vec() - n2.eta.vec()).norm() == 0.0);
  CHECK((n1.nu.vec() - n2.nu.vec()).norm() == 0.0);
}

TEST_CASE("radiation memory only removes energy")
{
  const auto model = VesselModel::build(st_no_restoring(), 60.0, 0.5);
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> lin(-1.0, 1.0), ang(-0.01, 0.01);
  for (int trial = 0; trial < 5; ++trial) {
    const BodyVel6 nu0{lin(rng), lin(rng), lin(rng), ang(rng), ang(rng), ang(rng)};
    auto s = make_state(model, 0.0, Pose6{}, nu0);
    std::vector<double> energy{model.kinetic_energy(s.nu.vec())};
    for (int k = 0; k < 1200; ++k) {
      s = step_dynamics(s, model, Vector6::Zero(), Vector6::Zero(), 0.5);
      energy.push_back(model.kinetic_energy(s.nu.vec()));
    }
    const std::size_t window = model.kernel().samples();
    bool ok = true;
    for (std::size_t i = 0; i < energy.size(); ++i) {
      for (std::size_t j = i + window; j < energy.size(); j += 10) {
        ok = ok && energy[j] <= energy[i] * (1.0 + 1e-9);
      }
    }
    CHECK(ok);
    CHECK(energy.back() < energy.front());
  }
}

TEST_CASE("RK4 converges at fourth order on constant loads")
{
  const auto db = st_hull_database();
  const Matrix6 a_inf = diag_a_inf();
  Vector6 f;
  f << 300.0, -200.0, 50.0, 10.0, -100.0, 8000.0;  // kN, kN m
  const Pose6 eta0{0.0, 0.0, 0.3, 0.02, -0.01, 0.4};
  const BodyVel6 nu0{2.0, 0.5, 0.0, 0.01, 0.0, 0.02};
  auto run = [&](double h) {
    const VesselModel model(db, RetardationKernel::zero(60.0, h), a_inf);
    auto s = make_state(model, 0.0, eta0, nu0);
    const int steps = static_cast<int>(std::lround(60.0 / h));
    for (int k = 0; k < steps; ++k) {
      s = step_dynamics(s, model, f, Vector6::Zero(), h);
    }
    Eigen::Matrix<double, 12, 1> y;
    y << s.eta.vec(), s.nu.vec();
    return y;
  };
  const auto ref = run(0.5 / 8.0);
  const double e1 = (run(1.0) - ref).norm();
  const double e2 = (run(0.5) - ref).norm();
  CHECK(e1 / e2 >= 8.0);
}

TEST_CASE("singular inertia and mismatched steps are rejected")
{
  auto db = st_hull_database();
  Matrix6 a = -db.rigid_mass;
  CHECK_THROWS_AS(VesselModel(db, RetardationKernel::zero(60.0, 0.5), a), SingularMassMatrix);
  const auto model = VesselModel::build(db, 60.0, 0.5);
  const auto s = make_state(model, 0.0, Pose6{}, BodyVel6{});
  CHECK_THROWS_AS((void)step_dynamics(s, model, Vector6::Zero(), Vector6::Zero(), 0.25), std::invalid_argument);
}

TEST_CASE("history spans ceil(Tc/h) + 1 samples")
{
  const auto model = VesselModel::build(st_hull_database(), 60.0, 0.5);
  const auto s = make_state(model, 0.0, Pose6{}, BodyVel6{1, 0, 0, 0, 0, 0});
  CHECK(s.history.size() == 121);
  CHECK(s.history.lag(0)(0) == 1.0);
  CHECK(s.history.lag(1)(0) == 0.0);
}
