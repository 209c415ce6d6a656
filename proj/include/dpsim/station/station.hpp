#pragma once

#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsim/harness/run.hpp"

namespace dpsim::station
{

DPSIM_DEFINE_ERROR(WrongPhase);
DPSIM_DEFINE_ERROR(InvalidCommand);
DPSIM_DEFINE_ERROR(Busy);

/// Environment the session runs in; directions in degrees.
struct EnvSummary
{
  double hs{0.0}, tp{0.0};
  double wave_dir_deg{0.0};
  double wind_speed{0.0}, wind_dir_deg{0.0};
  double current_speed{0.0}, current_dir_deg{0.0};
  std::uint64_t seed{0};

  [[nodiscard]] static EnvSummary of(const env::EnvironmentSpec & e);
  bool operator==(const EnvSummary &) const = default;
};

/// One control step, full scale. Angles in rad, forces in kN / kN m.
struct TelemetryFrame
{
  std::uint64_t step{0};
  double t{0.0};
  Vector6 eta{Vector6::Zero()};
  Vector6 nu{Vector6::Zero()};
  Vector3 eta_d{Vector3::Zero()};
  Vector3 setpoint{Vector3::Zero()};
  Vector3 tau{Vector3::Zero()};  // PID demand
  Eigen::VectorXd u;
  Eigen::VectorXd alpha;
  Vector3 s{Vector3::Zero()};    // allocation slack
  EnvSummary env{};
  std::uint64_t param_version{0};
  /// First frame of a subscription: carries the full parameter set.
  bool snapshot{false};
  nlohmann::json params;  // {version, values, slots}; null unless snapshot

  [[nodiscard]] nlohmann::json to_json() const;
  /// Throws InvalidCommand on a malformed frame.
  [[nodiscard]] static TelemetryFrame from_json(const nlohmann::json & j);
  bool operator==(const TelemetryFrame & o) const;
};

enum class CommandKind
{
  set_setpoint,  // {x, y, psi}  m, m, rad
  set_param,     // {name, value} or {values: {name: value, ...}}
  switch_algorithm,  // {slot, algorithm}
  start,
  stop,
};

[[nodiscard]] std::string to_string(CommandKind k);
[[nodiscard]] CommandKind parse_command_kind(const std::string & s);

struct CommandEnvelope
{
  std::string id;
  CommandKind kind{CommandKind::set_param};
  nlohmann::json payload = nlohmann::json::object();

  /// {"id": str, "kind": str, "payload": obj}; throws InvalidCommand.
  [[nodiscard]] static CommandEnvelope from_json(const nlohmann::json & j);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct CommandAck
{
  std::string id;
  CommandKind kind{CommandKind::set_param};
  bool ok{false};
  /// Control step whose computation first saw the command.
  std::optional<std::uint64_t> step;
  std::uint64_t param_version{0};
  std::string error;   // UnknownParam, InvalidValue, WrongPhase, InvalidCommand, Busy
  std::string reason;  // human-readable

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] static CommandAck from_json(const nlohmann::json & j);
};

enum class Phase
{
  ready,    // waiting for start
  running,
  stopped,
};

/// Scripted sessions (e.g. the box manoeuvre) own the setpoint.
enum class Mode
{
  manual,
  scripted,
};

[[nodiscard]] std::string to_string(Phase p);
[[nodiscard]] std::string to_string(Mode m);

struct LogEntry
{
  std::uint64_t step{0};
  double t{0.0};
  std::string id;
  CommandKind kind{CommandKind::set_param};
  bool ok{false};
  std::string error;
  std::uint64_t param_version{0};
  std::string payload;  // compact JSON
};

/// Bounded per-subscriber frame queue filled by the control loop.
class Subscription
{
public:
  /// Next frame, or nullopt after `timeout` or once closed and drained.
  [[nodiscard]] std::optional<TelemetryFrame> next(std::chrono::milliseconds timeout);
  [[nodiscard]] bool dropped() const;
  [[nodiscard]] bool closed() const;
  [[nodiscard]] std::size_t pending() const;
  void close();

private:
  friend class Supervisor;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<TelemetryFrame> frames_;
  bool needs_snapshot_{false};
  bool dropped_{false};
  bool closed_{false};
};

struct SupervisorOptions
{
  std::size_t queue_capacity{64};
  std::size_t subscriber_buffer{256};  // frames before a slow subscriber is dropped
  Mode mode{Mode::manual};
  bool wait_for_start{false};  // start in Phase::ready
  env::EnvironmentSpec environment{};
};

/// Meeting point of the control loop and the service. The loop side
/// (hooks()) never waits on service threads: commands are taken from a
/// bounded queue once per step and frames go to bounded queues.
class Supervisor
{
public:
  Supervisor(std::shared_ptr<control::ParamRegistry> registry, SupervisorOptions options = {});

  // Service side, any thread.
  /// Malformed envelopes and phase errors resolve immediately; the rest
  /// when the control loop applies them.
  [[nodiscard]] std::future<CommandAck> submit(CommandEnvelope cmd);
  [[nodiscard]] std::shared_ptr<Subscription> subscribe();
  [[nodiscard]] std::optional<TelemetryFrame> latest() const;
  [[nodiscard]] Phase phase() const;
  [[nodiscard]] Mode mode() const { return options_.mode; }
  [[nodiscard]] nlohmann::json state_json() const;
  [[nodiscard]] nlohmann::json params_json() const;
  [[nodiscard]] std::vector<LogEntry> log() const;
  [[nodiscard]] std::string log_csv() const;
  [[nodiscard]] std::size_t subscriber_count() const;
  /// True once running (or stopped); false on timeout.
  bool wait_until_started(std::chrono::milliseconds timeout) const;

  // Control-loop side.
  /// Drains commands before each step, publishes after it, resolves plant
  /// PARAM acks and reports stop requests.
  [[nodiscard]] harness::RunHooks hooks();
  /// Session over: rejects queued commands, closes subscriptions.
  void finish();

  [[nodiscard]] const std::shared_ptr<control::ParamRegistry> & registry() const { return registry_; }

private:
  struct Pending
  {
    CommandEnvelope cmd;
    std::promise<CommandAck> promise;
  };

  std::vector<link::Param> drain(const link::State & s, link::ControlStack & stack);
  void apply(Pending & p, const link::State & s, link::ControlStack & stack, std::vector<link::Param> & plant);
  void publish(const link::StepTrace & trace);
  void on_ack(const link::Param & p, const link::Ack & a);
  void record(const CommandAck & ack, const CommandEnvelope & cmd, double t);
  [[nodiscard]] TelemetryFrame with_snapshot(TelemetryFrame f) const;

  std::shared_ptr<control::ParamRegistry> registry_;
  SupervisorOptions options_;
  EnvSummary env_;

  mutable std::mutex mutex_;  // phase, queue, log, latest
  mutable std::condition_variable started_cv_;
  Phase phase_;
  std::deque<Pending> queue_;
  std::vector<LogEntry> log_;
  std::optional<TelemetryFrame> latest_;
  std::vector<std::shared_ptr<Subscription>> subscribers_;

  // Loop thread only.
  bool stop_{false};
  std::deque<Pending> awaiting_plant_;  // plant-side set_param, one PARAM each
  double t_{0.0};
  std::uint64_t step_{0};
};

}  // namespace dpsim::station
