#pragma once

#include <array>
#include <exception>
#include <limits>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dpsim/harness/config.hpp"
#include "dpsim/link/session.hpp"

namespace dpsim::harness
{

/// One control step as seen by the controller (full scale).
struct Sample
{
  double t{0.0};
  std::uint64_t step{0};
  Vector3 eta{Vector3::Zero()};       // x, y, psi measured
  Vector3 eta_d{Vector3::Zero()};     // reference filter output
  Vector3 setpoint{Vector3::Zero()};
  Vector3 tau{Vector3::Zero()};       // PID demand
  Vector3 achieved{Vector3::Zero()};  // B(alpha) u
  Vector3 slack{Vector3::Zero()};     // tau - B(alpha) u
  Eigen::VectorXd u;                  // kN
  Eigen::VectorXd alpha;              // rad
  bool feasible{true};                // magnitude and rate limits held
  std::uint64_t param_version{0};
};

/// Optional taps into the control loop; all run on the controller thread.
struct RunHooks
{
  /// Before the stack computes the step; returned PARAMs go to the plant.
  std::function<std::vector<link::Param>(const link::State &, link::ControlStack &)> before_step;
  std::function<void(const link::StepTrace &, link::ControlStack &)> after_step;
  std::function<void(const link::Param &, const link::Ack &)> on_ack;
  std::function<bool()> stop;
};

struct RunOptions
{
  bool wire{false};      // full TCP path instead of the in-process channel
  bool record{true};     // keep the per-step samples
  /// Registry to read parameters from; default: config.make_registry().
  std::shared_ptr<control::ParamRegistry> registry;
  /// Whether the config's setpoint script drives set_setpoint (off when an
  /// operator owns the setpoint).
  bool scripted{true};
  RunHooks hooks{};
  link::Millis timeout{link::kDefaultTimeout};
};

struct RunResult
{
  std::vector<Sample> samples;
  link::SessionResult session;
  std::size_t violations{0};  // steps where a limit did not hold
  double wall_seconds{0.0};
};

/// Runs one position-keeping or four-corner session. For a sweep config use
/// run_capability_sweep. Session errors propagate.
[[nodiscard]] RunResult run_scenario(const RunConfig & config, const std::shared_ptr<const RunAssets> & assets,
                                     const RunOptions & options = {});

struct AxisPercentiles
{
  double p50{0.0}, p95{0.0}, max{0.0};
};

struct RunSummary
{
  std::size_t samples{0};        // inside the statistics window
  std::size_t violations{0};
  double max_offset{0.0};        // m, |(x, y) - setpoint|
  double max_heading_deg{0.0};   // |psi - psi_setpoint|
  Vector3 mean_force{Vector3::Zero()};    // mean B(alpha) u, kN, kN, kN m
  Vector3 mean_abs_tau{Vector3::Zero()};  // mean |tau|
  std::array<AxisPercentiles, 3> slack{};  // |s| per axis
  Vector3 slack_p95_relative{Vector3::Zero()};  // p95 |s| / mean |tau|
  // Four-corner only (NaN otherwise).
  double steady_error{std::numeric_limits<double>::quiet_NaN()};  // m, worst corner
  double peak_error{std::numeric_limits<double>::quiet_NaN()};    // m, |(x, y) - reference|
  double max_heading_error_deg{std::numeric_limits<double>::quiet_NaN()};  // |psi - psi_d|
};

/// Statistics over samples with t >= scenario.settle (four-corner
/// tracking figures over the whole run; steady error over the last
/// steady_window of each dwell).
[[nodiscard]] RunSummary summarize(const std::vector<Sample> & samples, const ScenarioSpec & scenario);

/// Nearest-rank percentile (q in [0, 1]) of the values; 0 when empty.
[[nodiscard]] double percentile(std::vector<double> values, double q);

struct SweepRow
{
  std::size_t index{0};
  double direction{0.0};  // rad
  RunSummary summary;
  std::vector<Sample> samples;  // empty unless kept
};

struct SweepResult
{
  std::vector<SweepRow> rows;  // completed directions in index order
  std::size_t requested{0};
  std::exception_ptr error;    // first failure; later directions were not started
  std::optional<std::size_t> failed_index;
};

struct SweepOptions
{
  bool wire{false};
  bool keep_samples{false};
  /// Called after each completed direction (any worker thread, serialised).
  std::function<void(const SweepRow &)> on_row;
};

/// One position-keeping run per direction, environment collinear from it.
/// Runs on up to scenario.workers threads; results are merged by index and
/// do not depend on the thread count.
[[nodiscard]] SweepResult run_capability_sweep(const RunConfig & config,
                                               const std::shared_ptr<const RunAssets> & assets,
                                               const SweepOptions & options = {});

/// The single-direction config a sweep runs for `direction`.
[[nodiscard]] RunConfig sweep_direction_config(const RunConfig & config, double direction);

}  // namespace dpsim::harness
