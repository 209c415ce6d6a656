#pragma once

#include "dpsim/station/station.hpp"

namespace dpsim::station
{

struct SupervisedOptions
{
  bool wire{false};
  /// Wait this long for a start command when the supervisor is in Phase::ready.
  std::chrono::milliseconds start_timeout{std::chrono::hours(24)};
  /// Simulated seconds per wall second from the first step on; 0 runs as
  /// fast as the loop goes.
  double pace{0.0};
};

/// Runs the config's scenario under the supervisor: its registry, its
/// hooks, and the config's setpoint script only in scripted mode. The
/// supervisor is finished on return, also on error.
harness::RunResult run_supervised(const harness::RunConfig & config,
                                  const std::shared_ptr<const harness::RunAssets> & assets, Supervisor & supervisor,
                                  const SupervisedOptions & options = {});

}  // namespace dpsim::station
