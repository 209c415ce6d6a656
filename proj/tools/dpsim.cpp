#include <CLI11.hpp>
#include <fmt/format.h>
#include <fstream>
#include <iostream>

#include "dpsim/allocation/allocation.hpp"
#include "dpsim/control/params.hpp"
#include "dpsim/environment/environment.hpp"
#include "dpsim/harness/artifacts.hpp"
#include "dpsim/hydro/synthetic.hpp"
#include "dpsim/link/session.hpp"
#include "dpsim/station/server.hpp"
#include "dpsim/station/session.hpp"

namespace
{

using namespace dpsim;
using harness::RunConfig;
using harness::ScenarioKind;

// Command-line overrides shared by the run subcommands; unset ones keep
// the config file (or default) value.
struct Overrides
{
  std::string config;
  std::string out;
  std::optional<double> duration, settle, resolution, side, dwell, direction;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool wire{false};
  bool calm{false};
  bool keep_series{false};

  void add(CLI::App * cmd, ScenarioKind kind)
  {
    cmd->add_option("--config", config, "JSON run config (vessel, layout, env, gains, scenario)");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--duration", duration, "run length per session, s");
    cmd->add_option("--settle", settle, "statistics window start, s");
    cmd->add_option("--seed", seed, "wave phase seed");
    cmd->add_flag("--wire", wire, "run every session over TCP");
    cmd->add_flag("--calm", calm, "zero environment");
    if (kind == ScenarioKind::capability_sweep) {
      cmd->add_option("--resolution", resolution, "direction step, deg");
      cmd->add_option("--workers", workers, "parallel sessions (0 = hardware threads)");
      cmd->add_flag("--keep-series", keep_series, "write each direction's time series");
    }
    if (kind == ScenarioKind::four_corner) {
      cmd->add_option("--side", side, "box side, m");
      cmd->add_option("--dwell", dwell, "time per corner, s");
    }
    if (kind == ScenarioKind::position_keeping) {
      cmd->add_option("--direction", direction, "environment coming-from direction, deg");
    }
  }

  [[nodiscard]] RunConfig resolve(ScenarioKind kind) const
  {
    RunConfig c = config.empty() ? RunConfig::defaults(kind) : RunConfig::load(config);
    if (c.scenario.kind != kind) {
      throw harness::ConfigError(fmt::format("config is a {} scenario, expected {}", harness::to_string(c.scenario.kind),
                                             harness::to_string(kind)));
    }
    auto & s = c.scenario;
    if (side) {
      s.four_corner.side = *side;
    }
    if (dwell) {
      s.four_corner.dwell = *dwell;
      if (!duration) {
        s.duration = 5.0 * *dwell;
      }
    }
    if (duration) {
      s.duration = *duration;
    }
    if (settle) {
      s.settle = *settle;
    }
    if (seed) {
      s.seed = *seed;
      s.environment.seed = *seed;
    }
    if (resolution) {
      s.sweep_resolution_deg = *resolution;
    }
    if (workers) {
      s.workers = *workers;
    }
    if (calm) {
      s.environment = env::EnvironmentSpec{};
      s.environment.seed = s.seed;
    }
    if (direction) {
      c = harness::sweep_direction_config(c, deg2rad(*direction));
    }
    s.validate();
    return c;
  }
};

void print_summary(const harness::RunSummary & s) { std::cout << harness::summary_csv(s); }

int run_single(const Overrides & o, ScenarioKind kind)
{
  const RunConfig c = o.resolve(kind);
  const auto assets = harness::build_assets(c);
  harness::RunOptions ro;
  ro.wire = o.wire;
  const auto result = harness::run_scenario(c, assets, ro);
  const auto summary = harness::summarize(result.samples, c.scenario);
  harness::write_run(o.out, c, result, summary);
  print_summary(summary);
  std::cerr << fmt::format("{} steps in {:.2f} s; config {}\n", result.samples.size(), result.wall_seconds,
                           c.hash().substr(0, 12));
  return 0;
}

int run_sweep(const Overrides & o)
{
  const RunConfig c = o.resolve(ScenarioKind::capability_sweep);
  const auto assets = harness::build_assets(c);
  harness::SweepOptions so;
  so.wire = o.wire;
  so.keep_samples = o.keep_series;
  so.on_row = [](const harness::SweepRow & r) {
    std::cerr << fmt::format("  {:6.1f} deg  max offset {:.3f} m  heading {:.3f} deg\n", rad2deg(r.direction),
                             r.summary.max_offset, r.summary.max_heading_deg);
  };
  const auto result = harness::run_capability_sweep(c, assets, so);
  harness::write_sweep(o.out, c, result);
  std::cout << harness::polar_csv(result.rows);
  if (result.error) {
    try {
      std::rethrow_exception(result.error);
    } catch (const std::exception & e) {
      std::cerr << fmt::format("sweep aborted at direction index {}: {}\n", *result.failed_index, e.what());
    }
    return 2;
  }
  return 0;
}

struct StationArgs
{
  std::string config;
  std::string listen{"127.0.0.1:8080"};
  std::string out;
  double pace{1.0};
  bool wait_start{false};
  bool scripted{false};
  bool wire{false};
};

int run_station(const StationArgs & a)
{
  const RunConfig c = a.config.empty() ? RunConfig::defaults(ScenarioKind::position_keeping) : RunConfig::load(a.config);
  const auto assets = harness::build_assets(c);
  station::SupervisorOptions so;
  so.mode = a.scripted ? station::Mode::scripted : station::Mode::manual;
  so.wait_for_start = a.wait_start;
  so.environment = c.scenario.environment;
  auto sup = std::make_shared<station::Supervisor>(c.make_registry(), so);
  station::StationServer server(sup, link::Endpoint::parse(a.listen));
  std::cerr << fmt::format("station on http://127.0.0.1:{} (ws /telemetry); {}\n", server.port(),
                           a.wait_start ? "waiting for start" : "running");

  station::SupervisedOptions opt;
  opt.wire = a.wire;
  opt.pace = a.pace;
  const auto result = station::run_supervised(c, assets, *sup, opt);
  if (!a.out.empty()) {
    harness::write_run(a.out, c, result, harness::summarize(result.samples, c.scenario));
    std::ofstream(std::filesystem::path(a.out) / "commands.csv") << sup->log_csv();
  }
  server.stop();
  std::cerr << fmt::format("session ended after {} steps ({})\n", result.session.controller.steps,
                           result.session.plant.reason);
  return 0;
}

int run_plant(const std::string & config, const std::string & listen, std::size_t sessions)
{
  const RunConfig c = config.empty() ? RunConfig::defaults(ScenarioKind::position_keeping) : RunConfig::load(config);
  const auto assets = harness::build_assets(c);
  link::TcpListener listener(link::Endpoint::from_env(link::Endpoint::parse(listen)));
  std::cerr << fmt::format("plant listening on port {}\n", listener.port());
  link::ServeOptions so;
  so.steps = static_cast<std::uint64_t>(std::llround(c.scenario.duration / c.scenario.step));
  so.timeout = std::chrono::minutes(10);
  link::PlantConfig pc;
  pc.environment = c.scenario.environment;
  pc.wave_components = c.scenario.wave_components;
  pc.thruster_lag = c.scenario.thruster_lag;
  int failures = 0;
  link::serve_tcp(
    listener, [&] { return std::make_unique<link::Plant>(assets->plant, pc); }, so, sessions,
    [&](std::size_t k, const std::exception & e) {
      ++failures;
      std::cerr << fmt::format("session {}: {}\n", k, e.what());
    });
  return failures == 0 ? 0 : 1;
}

int run_control(const std::string & config, const std::string & connect)
{
  const RunConfig c = config.empty() ? RunConfig::defaults(ScenarioKind::position_keeping) : RunConfig::load(config);
  const auto layout = harness::load_vessel(c.vessel).layout;
  link::ControlStack stack(layout, c.make_registry());
  const auto script = c.scenario.setpoints();
  std::size_t next = 0;
  link::ControllerOptions co;
  co.timeout = std::chrono::minutes(10);
  co.before_step = [&](const link::State & s) {
    while (next < script.size() && script[next].t <= s.t + 1e-9) {
      stack.set_setpoint(script[next++].target);
    }
    return std::vector<link::Param>{};
  };
  auto ch = link::TcpChannel::connect(link::Endpoint::from_env(link::Endpoint::parse(connect)));
  const auto summary = link::run_controller(*ch, stack, co);
  std::cerr << fmt::format("{} steps, plant said: {}\n", summary.steps, summary.reason);
  return 0;
}

void make_data(const std::filesystem::path & d)
{
  std::filesystem::create_directories(d);
  hydro::save_database(d / "st_hull.hydro", hydro::st_hull_database());
  const auto m = env::st_wind_current_model();
  m.wind.table.save(d / "st_wind_coeffs.csv");
  m.current.table.save(d / "st_current_coeffs.csv");
  alloc::ThrusterLayout::shuttle_tanker().save(d / "st_layout.csv");
  std::filesystem::create_directories(d / "conformance");
  std::ofstream(d / "conformance" / "lockstep_3cycle.txt") << link::golden_session()->hex_dump();
  std::ofstream(d / "params_manifest.json") << control::ParamManifest::builtin().to_json().dump(2) << "\n";
  std::filesystem::create_directories(d / "configs");
  for (auto kind : {ScenarioKind::position_keeping, ScenarioKind::capability_sweep, ScenarioKind::four_corner}) {
    std::ofstream(d / "configs" / (harness::to_string(kind) + ".json"))
      << RunConfig::defaults(kind).to_json().dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"dpsim: dynamic positioning simulator"};
  app.require_subcommand(1);

  std::string dir = "data";
  auto * mk = app.add_subcommand("make-data", "regenerate shipped data files");
  mk->add_option("--dir", dir);

  Overrides pk, sw, fc;
  auto * run = app.add_subcommand("run", "one position-keeping run");
  pk.add(run, ScenarioKind::position_keeping);
  auto * sweep = app.add_subcommand("sweep", "capability sweep over environment directions");
  sw.add(sweep, ScenarioKind::capability_sweep);
  auto * four = app.add_subcommand("four-corner", "4-corner box manoeuvre");
  fc.add(four, ScenarioKind::four_corner);

  std::string report_dir;
  auto * rep = app.add_subcommand("report", "derived tables for a run directory");
  rep->add_option("dir", report_dir, "run directory")->required();

  StationArgs st;
  auto * sta = app.add_subcommand("station", "supervised live run with HTTP/WebSocket service");
  sta->add_option("--config", st.config, "JSON run config");
  sta->add_option("--listen", st.listen, "host:port of the service");
  sta->add_option("--out", st.out, "write run artifacts and the command log here");
  sta->add_option("--pace", st.pace, "simulated seconds per wall second (0 = as fast as possible)");
  sta->add_flag("--wait-start", st.wait_start, "hold the session until a start command");
  sta->add_flag("--scripted", st.scripted, "the config's setpoint script owns the setpoint");
  sta->add_flag("--wire", st.wire, "plant over TCP");

  std::string plant_config, plant_listen = "127.0.0.1:7700";
  std::size_t plant_sessions = 1;
  auto * pl = app.add_subcommand("plant", "serve plant sessions over TCP (DPSIM_PLANT_ENDPOINT overrides)");
  pl->add_option("--config", plant_config, "JSON run config (vessel, environment, duration)");
  pl->add_option("--listen", plant_listen, "host:port");
  pl->add_option("--sessions", plant_sessions, "sessions to accept before exiting");

  std::string ctl_config, ctl_connect = "127.0.0.1:7700";
  auto * ctl = app.add_subcommand("control", "run the controller against a plant over TCP");
  ctl->add_option("--config", ctl_config, "JSON run config (gains, setpoints)");
  ctl->add_option("--connect", ctl_connect, "plant host:port (DPSIM_PLANT_ENDPOINT overrides)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (mk->parsed()) {
      make_data(dir);
      return 0;
    }
    if (run->parsed()) {
      return run_single(pk, ScenarioKind::position_keeping);
    }
    if (sweep->parsed()) {
      return run_sweep(sw);
    }
    if (four->parsed()) {
      return run_single(fc, ScenarioKind::four_corner);
    }
    if (sta->parsed()) {
      return run_station(st);
    }
    if (pl->parsed()) {
      return run_plant(plant_config, plant_listen, plant_sessions);
    }
    if (ctl->parsed()) {
      return run_control(ctl_config, ctl_connect);
    }
    if (rep->parsed()) {
      for (const auto & p : harness::report(report_dir)) {
        std::cout << p.string() << "\n";
      }
      return 0;
    }
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
