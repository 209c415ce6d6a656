#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "dpsim/harness/artifacts.hpp"
#include "dpsim/harness/run.hpp"

using namespace dpsim;
using namespace dpsim::harness;
namespace fs = std::filesystem;

namespace
{

constexpr double kDeg = std::numbers::pi / 180.0;

const std::shared_ptr<const RunAssets> & assets()
{
  static const auto a = build_assets(RunConfig::defaults(ScenarioKind::position_keeping));
  return a;
}

RunConfig short_run(double dir_deg = 45.0, double duration = 200.0, double settle = 100.0)
{
  RunConfig c = RunConfig::defaults(ScenarioKind::position_keeping);
  c.scenario.environment = env::position_keeping_environment(dir_deg * kDeg);
  c.scenario.duration = duration;
  c.scenario.settle = settle;
  c.scenario.wave_components = 30;
  c.scenario.seed = 11;
  return c;
}

struct TempDir
{
  fs::path path;
  explicit TempDir(const std::string & tag)
  : path(fs::temp_directory_path() / fmt_name(tag))
  {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static std::string fmt_name(const std::string & tag)
  {
    std::random_device rd;
    return "dpsim_" + tag + "_" + std::to_string(rd());
  }
};

std::string slurp(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_sample(const Sample & a, const Sample & b)
{
  return a.t == b.t && a.step == b.step && a.eta == b.eta && a.eta_d == b.eta_d && a.setpoint == b.setpoint &&
         a.tau == b.tau && a.achieved == b.achieved && a.slack == b.slack && a.u == b.u && a.alpha == b.alpha &&
         a.feasible == b.feasible && a.param_version == b.param_version;
}

Sample flat_sample(double t, double x, double y, double psi)
{
  Sample s;
  s.t = t;
  s.step = static_cast<std::uint64_t>(t / 0.5);
  s.eta = {x, y, psi};
  s.eta_d = Vector3::Zero();
  s.tau = {10.0, -20.0, 100.0};
  s.achieved = s.tau;
  s.u = Eigen::VectorXd::Zero(2);
  s.alpha = Eigen::VectorXd::Zero(2);
  return s;
}

}  // namespace

TEST_CASE("config JSON round trip keeps the hash")
{
  RunConfig c = RunConfig::defaults(ScenarioKind::position_keeping);
  c.params["pid.kp.x"] = 321.5;
  c.slots["allocator"] = "pseudoinverse";
  c.scenario.seed = 99;
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(c.hash().size() == 64);

  RunConfig d = c;
  d.params["pid.kp.x"] = 321.6;
  CHECK(d.hash() != c.hash());
}

TEST_CASE("config rejects unknown keys and bad values")
{
  auto j = RunConfig::defaults(ScenarioKind::position_keeping).to_json();
  j["scenario"]["durration"] = 10;
  CHECK_THROWS_AS((void)RunConfig::from_json(j), ConfigError);

  auto k = RunConfig::defaults(ScenarioKind::position_keeping).to_json();
  k["undocumented"] = true;
  CHECK_THROWS_AS((void)RunConfig::from_json(k), ConfigError);

  RunConfig c = RunConfig::defaults(ScenarioKind::position_keeping);
  c.scenario.settle = c.scenario.duration;
  CHECK_THROWS_AS(c.scenario.validate(), ConfigError);

  RunConfig s = RunConfig::defaults(ScenarioKind::capability_sweep);
  s.scenario.sweep_resolution_deg = 7.0;
  CHECK_THROWS_AS(s.scenario.validate(), ConfigError);
}

TEST_CASE("sweep directions cover the circle at the resolution")
{
  RunConfig s = RunConfig::defaults(ScenarioKind::capability_sweep);
  const auto dirs = s.scenario.sweep_directions();
  REQUIRE(dirs.size() == 24);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    CHECK(dirs[i] == doctest::Approx(static_cast<double>(i) * 15.0 * kDeg));
  }
}

TEST_CASE("four-corner script visits the box and returns home")
{
  FourCornerSpec spec;
  const auto ev = four_corner_script(spec);
  REQUIRE(ev.size() == 5);
  const double expect[5][2] = {{0, 0}, {40, 0}, {40, 40}, {0, 40}, {0, 0}};
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(ev[i].t == doctest::Approx(static_cast<double>(i) * spec.dwell));
    CHECK(ev[i].target.x == doctest::Approx(expect[i][0]));
    CHECK(ev[i].target.y == doctest::Approx(expect[i][1]));
    CHECK(ev[i].target.psi == doctest::Approx(0.0));
  }
  const RunConfig c = RunConfig::defaults(ScenarioKind::four_corner);
  CHECK(c.scenario.duration == doctest::Approx(5 * spec.dwell));
  CHECK(c.scenario.settle == 0.0);
}

TEST_CASE("percentile is nearest rank")
{
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) {
    v.push_back(i);
  }
  CHECK(percentile(v, 0.95) == 95.0);
  CHECK(percentile(v, 0.50) == 50.0);
  CHECK(percentile(v, 1.0) == 100.0);
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile({7.0}, 0.95) == 7.0);
  CHECK(percentile({}, 0.95) == 0.0);
  // ceil(0.95 * 10) = 10th of 10
  CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.95) == 10.0);
}

TEST_CASE("statistics ignore samples before the settle time")
{
  ScenarioSpec sc;
  sc.duration = 100.0;
  sc.settle = 50.0;
  std::vector<Sample> a, b;
  for (int k = 0; k < 200; ++k) {
    const double t = 0.5 * k;
    const double x = t >= 50.0 ? 0.3 * std::sin(0.1 * t) : 0.0;
    a.push_back(flat_sample(t, x, 0.1, 0.01));
    b.push_back(flat_sample(t, t >= 50.0 ? x : 25.0, t >= 50.0 ? 0.1 : -30.0, t >= 50.0 ? 0.01 : 1.0));
  }
  const RunSummary sa = summarize(a, sc), sb = summarize(b, sc);
  CHECK(sa.samples == 100);
  CHECK(sb.samples == 100);
  CHECK(sa.max_offset == sb.max_offset);
  CHECK(sa.max_heading_deg == sb.max_heading_deg);
  CHECK(sa.mean_force == sb.mean_force);
  // Independent check of the offset maximum over t >= 50.
  double expect = 0.0;
  for (int k = 100; k < 200; ++k) {
    const double t = 0.5 * k;
    expect = std::max(expect, std::hypot(0.3 * std::sin(0.1 * t), 0.1));
  }
  CHECK(sa.max_offset == doctest::Approx(expect).epsilon(1e-12));
  CHECK(sa.max_heading_deg == doctest::Approx(0.01 / kDeg));
  CHECK(std::isnan(sa.steady_error));
}

TEST_CASE("slack statistics match a direct computation")
{
  ScenarioSpec sc;
  sc.duration = 50.0;
  sc.settle = 0.0;
  std::vector<Sample> v;
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> sx;
  double mean_tau = 0.0;
  for (int k = 0; k < 100; ++k) {
    Sample s = flat_sample(0.5 * k, 0, 0, 0);
    s.slack = {n(rng), 0.0, 0.0};
    s.tau = {100.0 + n(rng), 1.0, 1.0};
    sx.push_back(std::abs(s.slack.x()));
    mean_tau += std::abs(s.tau.x()) / 100.0;
    v.push_back(s);
  }
  std::sort(sx.begin(), sx.end());
  const RunSummary r = summarize(v, sc);
  CHECK(r.slack[0].p95 == sx[94]);
  CHECK(r.slack[0].p50 == sx[49]);
  CHECK(r.slack[0].max == sx[99]);
  CHECK(r.slack_p95_relative.x() == doctest::Approx(sx[94] / mean_tau));
}

TEST_CASE("series files round trip without loss")
{
  TempDir dir("series");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  std::vector<Sample> v;
  for (int k = 0; k < 50; ++k) {
    Sample s = flat_sample(0.5 * k, d(rng), d(rng), d(rng) * 1e-9);
    s.eta_d = {d(rng), 1.0 / 3.0, 5e-324};
    s.setpoint = {d(rng), -0.0, std::numbers::pi};
    s.slack = {1e-17, d(rng), 2.2250738585072014e-308};
    s.u = Eigen::VectorXd::Random(6) * 300.0;
    s.alpha = Eigen::VectorXd::Random(6) * 3.0;
    s.feasible = k % 3 != 0;
    s.param_version = static_cast<std::uint64_t>(k * 7);
    v.push_back(s);
  }
  write_series(dir.path / kSeriesFile, v);
  const auto back = read_series(dir.path / kSeriesFile);
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(same_sample(v[i], back[i]));
  }
}

TEST_CASE("reading a malformed series fails loudly")
{
  TempDir dir("badseries");
  std::ofstream(dir.path / kSeriesFile) << "t,step\n1,2,3\n";
  CHECK_THROWS_AS((void)read_series(dir.path / kSeriesFile), ArtifactFormatError);
  CHECK_THROWS_AS((void)read_series(dir.path / "absent.csv"), MissingArtifact);
}

TEST_CASE("the same config and seed reproduce the run exactly")
{
  const RunConfig c = short_run();
  const RunResult a = run_scenario(c, assets());
  const RunResult b = run_scenario(c, assets());
  REQUIRE(a.samples.size() == 400);
  REQUIRE(b.samples.size() == a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    REQUIRE(same_sample(a.samples[i], b.samples[i]));
  }
  CHECK(summary_csv(summarize(a.samples, c.scenario)) == summary_csv(summarize(b.samples, c.scenario)));

  RunConfig other = c;
  other.scenario.seed = 12;
  const RunResult o = run_scenario(other, assets());
  CHECK(!same_sample(o.samples.back(), a.samples.back()));
}

TEST_CASE("wire session gives the same samples as the in-process one")
{
  const RunConfig c = short_run(90.0, 60.0, 10.0);
  RunOptions wire;
  wire.wire = true;
  const RunResult m = run_scenario(c, assets());
  const RunResult w = run_scenario(c, assets(), wire);
  REQUIRE(m.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    REQUIRE(same_sample(m.samples[i], w.samples[i]));
  }
}

TEST_CASE("position keeping holds limits and stays near the origin")
{
  const RunConfig c = short_run(45.0, 400.0, 200.0);
  const RunResult r = run_scenario(c, assets());
  const RunSummary s = summarize(r.samples, c.scenario);
  CHECK(r.violations == 0);
  CHECK(s.violations == 0);
  CHECK(s.max_offset < 5.0);
  CHECK(s.max_heading_deg < 5.0);
  CHECK(r.session.plant.steps == 800);
}

TEST_CASE("a short box manoeuvre tracks its corners")
{
  RunConfig c = RunConfig::defaults(ScenarioKind::four_corner);
  c.scenario.four_corner.side = 10.0;
  c.scenario.four_corner.dwell = 300.0;
  c.scenario.duration = 1500.0;
  const RunResult r = run_scenario(c, assets());
  const RunSummary s = summarize(r.samples, c.scenario);
  CHECK(s.steady_error < 1.0);
  CHECK(s.peak_error < 10.0);
  CHECK(s.max_heading_error_deg < 5.0);
  CHECK(r.violations == 0);
}

TEST_CASE("script events change the setpoint at their time")
{
  RunConfig c = short_run(0.0, 40.0, 0.0);
  c.scenario.environment = env::EnvironmentSpec{};
  c.scenario.script = {{0.0, control::Setpoint::make(0, 0, 0)}, {20.0, control::Setpoint::make(3.0, -2.0, 0.1)}};
  const RunResult r = run_scenario(c, assets());
  for (const auto & s : r.samples) {
    if (s.t < 20.0) {
      CHECK(s.setpoint == Vector3::Zero());
    } else {
      CHECK(s.setpoint == Vector3(3.0, -2.0, 0.1));
    }
  }
}

TEST_CASE("sweep results do not depend on the worker count")
{
  RunConfig c = RunConfig::defaults(ScenarioKind::capability_sweep);
  c.scenario.duration = 60.0;
  c.scenario.settle = 20.0;
  c.scenario.wave_components = 20;
  c.scenario.sweep_resolution_deg = 90.0;
  c.scenario.workers = 1;
  const SweepResult one = run_capability_sweep(c, assets());
  c.scenario.workers = 3;
  const SweepResult three = run_capability_sweep(c, assets());
  REQUIRE(!one.error);
  REQUIRE(!three.error);
  REQUIRE(one.rows.size() == 4);
  CHECK(polar_csv(one.rows) == polar_csv(three.rows));
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].index == i);
    CHECK(one.rows[i].direction == doctest::Approx(static_cast<double>(i) * 90.0 * kDeg));
  }

  // Each row equals the single-direction run.
  const RunConfig single = sweep_direction_config(c, 180.0 * kDeg);
  const RunResult r = run_scenario(single, assets());
  CHECK(summary_csv(summarize(r.samples, single.scenario)) == summary_csv(one.rows[2].summary));
}

TEST_CASE("a failing direction keeps the finished rows and records the failure")
{
  RunConfig c = RunConfig::defaults(ScenarioKind::capability_sweep);
  c.scenario.duration = 30.0;
  c.scenario.settle = 10.0;
  c.scenario.wave_components = 20;
  c.scenario.sweep_resolution_deg = 60.0;
  c.scenario.workers = 1;
  SweepOptions opt;
  opt.on_row = [](const SweepRow & row) {
    if (row.index == 2) {
      throw std::runtime_error("injected failure");
    }
  };
  const SweepResult r = run_capability_sweep(c, assets(), opt);
  REQUIRE(r.error);
  REQUIRE(r.failed_index.has_value());
  CHECK(*r.failed_index == 2);
  CHECK(r.requested == 6);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].index == 0);
  CHECK(r.rows[1].index == 1);

  TempDir dir("partial");
  write_sweep(dir.path, c, r);
  const auto m = nlohmann::json::parse(slurp(dir.path / kManifestFile));
  CHECK(m["sweep"]["requested"] == 6);
  CHECK(m["sweep"]["completed"] == 2);
  CHECK(m["sweep"]["failed_index"] == 2);
  CHECK(m["sweep"]["error"].get<std::string>().find("injected failure") != std::string::npos);
}

TEST_CASE("calm water needs no offset and no force")
{
  RunConfig c = RunConfig::defaults(ScenarioKind::capability_sweep);
  c.scenario.environment = env::EnvironmentSpec{};
  c.scenario.duration = 200.0;
  c.scenario.settle = 50.0;
  c.scenario.sweep_resolution_deg = 120.0;
  const SweepResult r = run_capability_sweep(c, assets());
  REQUIRE(!r.error);
  REQUIRE(r.rows.size() == 3);
  for (const auto & row : r.rows) {
    CHECK(row.summary.max_offset <= 0.01);
    CHECK(row.summary.mean_force.norm() < 1e-6);
  }
}

TEST_CASE("report needs run artifacts")
{
  TempDir dir("empty");
  CHECK_THROWS_AS((void)report(dir.path), MissingArtifact);
  CHECK_THROWS_AS((void)report(dir.path / "nowhere"), MissingArtifact);
  std::ofstream(dir.path / kManifestFile) << nlohmann::json{{"format", 1}, {"kind", "position_keeping"}}.dump();
  CHECK_THROWS((void)report(dir.path));
}

TEST_CASE("report reproduces the reference summary of a stored run")
{
  TempDir dir("golden");
  const fs::path src = fs::path(DPSIM_TEST_DATA_DIR) / "golden_run";
  fs::copy_file(src / kManifestFile, dir.path / kManifestFile);
  fs::copy_file(src / kSeriesFile, dir.path / kSeriesFile);
  const auto files = report(dir.path);
  CHECK(files.size() >= 3);
  CHECK(slurp(dir.path / "report" / kSummaryFile) == slurp(src / "expected_summary.csv"));
  CHECK(fs::exists(dir.path / "report" / "thrusters.csv"));
  CHECK(fs::exists(dir.path / "report" / "allocation_error.csv"));
}

TEST_CASE("stored run matches a fresh run of its manifest config")
{
  const fs::path src = fs::path(DPSIM_TEST_DATA_DIR) / "golden_run";
  const auto m = nlohmann::json::parse(slurp(src / kManifestFile));
  const RunConfig c = RunConfig::from_json(m["config"]);
  CHECK(c.hash() == m["config_hash"].get<std::string>());
  const auto stored = read_series(src / kSeriesFile);
  const RunResult r = run_scenario(c, assets());
  REQUIRE(stored.size() == r.samples.size());
  for (std::size_t i = 0; i < stored.size(); ++i) {
    REQUIRE(same_sample(stored[i], r.samples[i]));
  }
}

TEST_CASE("sweep artifacts and report")
{
  RunConfig c = RunConfig::defaults(ScenarioKind::capability_sweep);
  c.scenario.duration = 40.0;
  c.scenario.settle = 10.0;
  c.scenario.wave_components = 20;
  c.scenario.sweep_resolution_deg = 90.0;
  SweepOptions opt;
  opt.keep_samples = true;
  const SweepResult r = run_capability_sweep(c, assets(), opt);
  REQUIRE(!r.error);
  TempDir dir("sweep");
  write_sweep(dir.path, c, r);
  CHECK(fs::exists(dir.path / kPolarFile));
  CHECK(fs::exists(dir.path / "dir_090" / kSeriesFile));
  report(dir.path);
  const std::string polar = slurp(dir.path / "report" / "polar_offset.csv");
  CHECK(std::count(polar.begin(), polar.end(), '\n') == 5);  // header + 4 directions
  CHECK(fs::exists(dir.path / "report" / "polar_force.csv"));
  CHECK(fs::exists(dir.path / "dir_180" / "report" / kSummaryFile));
}
