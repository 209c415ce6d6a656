#include "dpsim/harness/run.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <mutex>
#include <thread>

namespace dpsim::harness
{

namespace
{

Vector3 planar(const Vector6 & v) { return {v(0), v(1), v(5)}; }

link::SessionResult run_over_tcp(link::Plant & plant, link::ControlStack & stack, const link::ServeOptions & serve,
                                 const link::ControllerOptions & control)
{
  link::TcpListener listener(link::Endpoint{"127.0.0.1", 0});
  link::SessionResult result;
  std::exception_ptr plant_error;
  std::thread worker([&] {
    try {
      auto channel = listener.accept(serve.timeout);
      result.plant = link::serve_plant(*channel, plant, serve);
    } catch (...) {
      plant_error = std::current_exception();
    }
  });
  std::exception_ptr controller_error;
  try {
    auto channel = link::TcpChannel::connect(link::Endpoint{"127.0.0.1", listener.port()}, control.timeout);
    result.controller = link::run_controller(*channel, stack, control);
  } catch (...) {
    controller_error = std::current_exception();
    listener.close();
  }
  worker.join();
  if (plant_error) {
    std::rethrow_exception(plant_error);
  }
  if (controller_error) {
    std::rethrow_exception(controller_error);
  }
  return result;
}

}  // namespace

RunResult run_scenario(const RunConfig & config, const std::shared_ptr<const RunAssets> & assets,
                       const RunOptions & options)
{
  const ScenarioSpec & sc = config.scenario;
  sc.validate();
  if (sc.kind == ScenarioKind::capability_sweep) {
    throw ConfigError("a capability sweep runs through run_capability_sweep");
  }
  if (!assets || !assets->plant) {
    throw ConfigError("run needs plant assets");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto & layout = assets->vessel.layout;
  auto registry = options.registry ? options.registry : config.make_registry();
  link::ControlStack stack(layout, registry);

  link::PlantConfig pc;
  pc.environment = sc.environment;
  pc.environment.seed = sc.seed;
  pc.wave_components = sc.wave_components;
  pc.thruster_lag = sc.thruster_lag;
  link::Plant plant(assets->plant, pc);

  link::ServeOptions serve;
  serve.steps = static_cast<std::uint64_t>(std::llround(sc.duration / sc.step));
  serve.timeout = options.timeout;

  RunResult out;
  if (options.record) {
    out.samples.reserve(serve.steps);
  }
  const auto script = sc.setpoints();
  std::size_t next = 0;
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  Eigen::VectorXd alpha_prev = layout.initial_angles();

  link::ControllerOptions control;
  control.timeout = options.timeout;
  control.before_step = [&](const link::State & s) {
    while (options.scripted && next < script.size() && script[next].t <= s.t + 1e-9) {
      stack.set_setpoint(script[next].target);
      ++next;
    }
    return options.hooks.before_step ? options.hooks.before_step(s, stack) : std::vector<link::Param>{};
  };
  control.on_ack = options.hooks.on_ack;
  control.stop = options.hooks.stop;
  control.after_step = [&](const link::StepTrace & tr) {
    alloc::AllocationProblem problem;
    problem.tau = tr.tau;
    problem.u0 = u_prev;
    problem.alpha0 = alpha_prev;
    problem.step = stack.step_size();
    const bool ok = alloc::satisfies_constraints(tr.allocation, problem, layout);
    u_prev = tr.allocation.u;
    alpha_prev = tr.allocation.alpha;
    if (!ok) {
      ++out.violations;
    }
    if (options.record) {
      Sample smp;
      smp.t = tr.t;
      smp.step = tr.step;
      smp.eta = planar(tr.eta);
      smp.eta_d = tr.reference.eta_d;
      smp.setpoint = tr.setpoint.vec();
      smp.tau = tr.tau;
      smp.achieved = tr.allocation.achieved;
      smp.slack = tr.allocation.s;
      smp.u = tr.allocation.u;
      smp.alpha = tr.allocation.alpha;
      smp.feasible = ok;
      smp.param_version = tr.param_version;
      out.samples.push_back(std::move(smp));
    }
    if (options.hooks.after_step) {
      options.hooks.after_step(tr, stack);
    }
  };

  out.session = options.wire ? run_over_tcp(plant, stack, serve, control)
                             : link::run_memory_session(plant, stack, serve, control);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double percentile(std::vector<double> values, double q)
{
  if (values.empty()) {
    return 0.0;
  }
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n)));
  return values[std::min(rank, values.size()) - 1];
}

RunSummary summarize(const std::vector<Sample> & samples, const ScenarioSpec & scenario)
{
  RunSummary r;
  std::array<std::vector<double>, 3> slack;
  for (const auto & s : samples) {
    if (!s.feasible) {
      ++r.violations;
    }
    if (s.t < scenario.settle) {
      continue;
    }
    ++r.samples;
    r.max_offset = std::max(r.max_offset, std::hypot(s.eta(0) - s.setpoint(0), s.eta(1) - s.setpoint(1)));
    r.max_heading_deg = std::max(r.max_heading_deg, std::abs(rad2deg(wrap_angle(s.eta(2) - s.setpoint(2)))));
    r.mean_force += s.achieved;
    r.mean_abs_tau += s.tau.cwiseAbs();
    for (int i = 0; i < 3; ++i) {
      slack[static_cast<std::size_t>(i)].push_back(std::abs(s.slack(i)));
    }
  }
  if (r.samples > 0) {
    r.mean_force /= static_cast<double>(r.samples);
    r.mean_abs_tau /= static_cast<double>(r.samples);
  }
  for (int i = 0; i < 3; ++i) {
    auto & a = r.slack[static_cast<std::size_t>(i)];
    const auto & v = slack[static_cast<std::size_t>(i)];
    a.p50 = percentile(v, 0.50);
    a.p95 = percentile(v, 0.95);
    a.max = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    const double d = r.mean_abs_tau(i);
    r.slack_p95_relative(i) = d > 0.0 ? a.p95 / d : (a.p95 > 0.0 ? control::kUnlimited : 0.0);
  }

  if (scenario.kind == ScenarioKind::four_corner) {
    const auto script = scenario.setpoints();
    r.steady_error = 0.0;
    r.peak_error = 0.0;
    r.max_heading_error_deg = 0.0;
    for (const auto & s : samples) {
      r.peak_error = std::max(r.peak_error, std::hypot(s.eta(0) - s.eta_d(0), s.eta(1) - s.eta_d(1)));
      r.max_heading_error_deg =
        std::max(r.max_heading_error_deg, std::abs(rad2deg(wrap_angle(s.eta(2) - s.eta_d(2)))));
    }
    for (std::size_t k = 0; k < script.size(); ++k) {
      const double end = k + 1 < script.size() ? script[k + 1].t : scenario.duration;
      const double from = end - scenario.four_corner.steady_window;
      const Vector3 target = script[k].target.vec();
      for (const auto & s : samples) {
        if (s.t >= from && s.t < end) {
          r.steady_error = std::max(r.steady_error, std::hypot(s.eta(0) - target(0), s.eta(1) - target(1)));
        }
      }
    }
  }
  return r;
}

RunConfig sweep_direction_config(const RunConfig & config, double direction)
{
  RunConfig c = config;
  c.scenario.kind = ScenarioKind::position_keeping;
  c.scenario.environment.wave_dir = direction;
  c.scenario.environment.wind_dir = direction;
  c.scenario.environment.current_dir = direction;
  return c;
}

SweepResult run_capability_sweep(const RunConfig & config, const std::shared_ptr<const RunAssets> & assets,
                                 const SweepOptions & options)
{
  config.scenario.validate();
  const auto directions = config.scenario.sweep_directions();
  SweepResult result;
  result.requested = directions.size();

  unsigned workers = config.scenario.workers > 0 ? config.scenario.workers : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(directions.size()));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mutex;
  auto work = [&] {
    for (;;) {
      if (abort) {
        return;
      }
      const std::size_t i = next++;
      if (i >= directions.size()) {
        return;
      }
      try {
        const RunConfig c = sweep_direction_config(config, directions[i]);
        RunOptions ro;
        ro.wire = options.wire;
        RunResult run = run_scenario(c, assets, ro);
        SweepRow row{i, directions[i], summarize(run.samples, c.scenario), {}};
        if (options.keep_samples) {
          row.samples = std::move(run.samples);
        }
        std::lock_guard lock(mutex);
        if (options.on_row) {
          options.on_row(row);
        }
        result.rows.push_back(std::move(row));
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!result.failed_index || i < *result.failed_index) {
          result.failed_index = i;
          result.error = std::current_exception();
        }
        abort = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) {
    pool.emplace_back(work);
  }
  work();
  for (auto & t : pool) {
    t.join();
  }
  std::sort(result.rows.begin(), result.rows.end(),
            [](const SweepRow & a, const SweepRow & b) { return a.index < b.index; });
  return result;
}

}  // namespace dpsim::harness
