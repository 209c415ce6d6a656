#include "dpsim/station/session.hpp"

#include <thread>

namespace dpsim::station
{

harness::RunResult run_supervised(const harness::RunConfig & config,
                                  const std::shared_ptr<const harness::RunAssets> & assets, Supervisor & supervisor,
                                  const SupervisedOptions & options)
{
  struct Finish
  {
    Supervisor & s;
    ~Finish() { s.finish(); }
  } finish{supervisor};

  if (!supervisor.wait_until_started(options.start_timeout)) {
    throw WrongPhase("no start command before the timeout");
  }
  if (supervisor.phase() == Phase::stopped) {
    return {};
  }
  harness::RunOptions ro;
  ro.wire = options.wire;
  ro.registry = supervisor.registry();
  ro.scripted = supervisor.mode() == Mode::scripted;
  ro.hooks = supervisor.hooks();
  if (options.pace > 0.0) {
    std::optional<std::chrono::steady_clock::time_point> origin;
    ro.hooks.before_step = [origin, pace = options.pace, inner = ro.hooks.before_step](
                             const link::State & s, link::ControlStack & stack) mutable {
      if (!origin) {
        origin = std::chrono::steady_clock::now() - std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                      std::chrono::duration<double>(s.t / pace));
      }
      std::this_thread::sleep_until(*origin + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(s.t / pace)));
      return inner(s, stack);
    };
  }
  return harness::run_scenario(config, assets, ro);
}

}  // namespace dpsim::station
