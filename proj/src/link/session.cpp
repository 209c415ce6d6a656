#include "dpsim/link/session.hpp"

#include <exception>
#include <thread>

#include "dpsim/hydro/synthetic.hpp"

namespace dpsim::link
{

SessionResult run_memory_session(Plant & plant, ControlStack & stack, const ServeOptions & serve,
                                 const ControllerOptions & control, const std::shared_ptr<Transcript> & transcript)
{
  auto [plant_end, controller_end] = memory_pair();
  if (transcript) {
    plant_end = std::make_unique<RecordingChannel>(std::move(plant_end), transcript, Direction::plant_to_controller);
    controller_end =
      std::make_unique<RecordingChannel>(std::move(controller_end), transcript, Direction::controller_to_plant);
  }
  SessionResult result;
  std::exception_ptr plant_error;
  std::thread worker([&, ch = plant_end.get()] {
    try {
      result.plant = serve_plant(*ch, plant, serve);
    } catch (...) {
      plant_error = std::current_exception();
      ch->close();
    }
  });
  std::exception_ptr controller_error;
  try {
    result.controller = run_controller(*controller_end, stack, control);
  } catch (...) {
    controller_error = std::current_exception();
    controller_end->close();
  }
  worker.join();
  // The side that detected the breach is the more informative one.
  if (plant_error) {
    std::rethrow_exception(plant_error);
  }
  if (controller_error) {
    std::rethrow_exception(controller_error);
  }
  return result;
}

std::shared_ptr<Transcript> golden_session()
{
  const auto layout = alloc::ThrusterLayout::shuttle_tanker();
  const auto assets =
    PlantAssets::build(hydro::st_hull_database(), layout, env::st_wind_current_model(), scaling::ScaleSpec{});
  PlantConfig cfg;
  cfg.environment = env::position_keeping_environment(deg2rad(30.0), 1);
  cfg.wave_components = 40;
  Plant plant(assets, cfg);
  ControlStack stack(layout, std::make_shared<control::ParamRegistry>());
  auto transcript = std::make_shared<Transcript>();
  ServeOptions serve;
  serve.steps = 3;
  (void)run_memory_session(plant, stack, serve, {}, transcript);
  return transcript;
}

}  // namespace dpsim::link
