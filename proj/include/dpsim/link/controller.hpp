#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dpsim/allocation/allocation.hpp"
#include "dpsim/control/control.hpp"
#include "dpsim/control/params.hpp"
#include "dpsim/link/channel.hpp"

namespace dpsim::link
{

/// Everything the controller computed in one step (full scale).
struct StepTrace
{
  double t{0.0};
  std::uint64_t step{0};
  Vector6 eta{Vector6::Zero()};
  Vector6 nu{Vector6::Zero()};
  control::Setpoint setpoint{};
  control::ReferenceState reference{};
  Vector3 tau{Vector3::Zero()};  // PID demand
  alloc::AllocationResult allocation{};
  std::uint64_t param_version{0};
};

/// Reference filter -> PID -> allocation, reading its parameters from a
/// registry snapshot once per step. Not thread-safe; one per session.
class ControlStack
{
public:
  ControlStack(alloc::ThrusterLayout layout, std::shared_ptr<control::ParamRegistry> registry);

  /// Control step in s (full scale); set from the plant HELLO.
  void set_step(double h);
  [[nodiscard]] double step_size() const { return h_; }

  /// The first step starts the reference at the measured pose; without a
  /// setpoint the vessel holds the pose it was first seen at.
  void set_setpoint(const control::Setpoint & r) { setpoint_ = r; }
  [[nodiscard]] const std::optional<control::Setpoint> & setpoint() const { return setpoint_; }

  void reset_integral() { pid_.reset(); }

  [[nodiscard]] Cmd step(const State & s);

  [[nodiscard]] const StepTrace & last() const { return last_; }
  [[nodiscard]] const alloc::ThrusterLayout & layout() const { return layout_; }
  [[nodiscard]] const control::PidState & pid_state() const { return pid_; }
  [[nodiscard]] const std::shared_ptr<control::ParamRegistry> & registry() const { return registry_; }

private:
  alloc::ThrusterLayout layout_;
  std::shared_ptr<control::ParamRegistry> registry_;
  Vector3 capability_;
  double h_{0.5};
  std::optional<control::Setpoint> setpoint_;
  control::ReferenceState ref_{};
  control::PidState pid_{};
  Eigen::VectorXd u_prev_, alpha_prev_;
  std::shared_ptr<const control::ParamSnapshot> params_;
  bool started_{false};
  StepTrace last_{};
};

struct ControllerOptions
{
  Millis timeout{kDefaultTimeout};
  /// Called with each STATE before the stack runs; returned PARAMs are sent
  /// to the plant (and acknowledged) before the CMD.
  std::function<std::vector<Param>(const State &)> before_step;
  std::function<void(const Param &, const Ack &)> on_ack;
  std::function<void(const StepTrace &)> after_step;
  /// Polled at every STATE after before_step; true ends the session with
  /// BYE "stop" instead of a CMD.
  std::function<bool()> stop;
};

/// Controller side of the lockstep session. Returns at the plant's BYE.
SessionSummary run_controller(Channel & channel, ControlStack & stack, const ControllerOptions & options = {});

}  // namespace dpsim::link
