#pragma once

#include <functional>
#include <memory>

#include "dpsim/allocation/allocation.hpp"
#include "dpsim/environment/environment.hpp"
#include "dpsim/hydro/dynamics.hpp"
#include "dpsim/link/channel.hpp"
#include "dpsim/scaling/scaling.hpp"

namespace dpsim::link
{

DPSIM_DEFINE_ERROR(UnknownPlantParam);

inline constexpr double kDefaultStep = 0.5;          // s, full scale
inline constexpr double kDefaultCutoff = 60.0;       // s, full scale
inline constexpr double kDefaultThrusterLag = 1.0;   // s, full scale

/// Immutable simulation data shared by any number of plants: the hull at
/// the plant's own scale plus the full-scale originals for the boundary.
struct PlantAssets
{
  scaling::ScaleSpec scale;
  double h{kDefaultStep};  // full scale
  hydro::HydroDatabase database;  // plant scale
  hydro::VesselModel model;       // plant scale, step h / sqrt(lambda)
  alloc::ThrusterLayout layout;   // plant scale
  env::WindCurrentModel drag;     // plant scale

  /// Converts the full-scale inputs to the plant's scale and builds the
  /// vessel model with the full-scale kernel cutoff and step scaled in time.
  [[nodiscard]] static std::shared_ptr<const PlantAssets> build(const hydro::HydroDatabase & full_db,
                                                                const alloc::ThrusterLayout & full_layout,
                                                                const env::WindCurrentModel & full_drag,
                                                                const scaling::ScaleSpec & scale,
                                                                double h = kDefaultStep,
                                                                double cutoff_time = kDefaultCutoff);

  [[nodiscard]] double model_step() const { return scaling::to_model_scale(h, scaling::Kind::time, scale); }
};

/// Per-run settings, all full scale.
struct PlantConfig
{
  env::EnvironmentSpec environment{};
  std::size_t wave_components{100};
  double thruster_lag{kDefaultThrusterLag};  // first-order time constant; 0 = instantaneous
  hydro::Pose6 initial_pose{};
};

/// The simulated vessel behind the wire. Inputs and outputs are full scale;
/// internally the hull runs at the assets' scale.
class Plant
{
public:
  Plant(std::shared_ptr<const PlantAssets> assets, PlantConfig config);

  [[nodiscard]] Hello hello() const;
  [[nodiscard]] State state() const;
  [[nodiscard]] std::uint64_t steps() const { return steps_; }

  /// Sets the commanded thrusts and angles. Throws ProtocolViolation when
  /// the thruster count is wrong or a value is outside the layout limits.
  void command(const Cmd & cmd);

  /// Thruster lag, then one dynamics step of h with loads sampled at the
  /// start of the step.
  void step();

  /// "plant.thruster_lag" (s, full scale, >= 0). Throws UnknownPlantParam
  /// or std::invalid_argument.
  void set_param(const std::string & name, double value);

  [[nodiscard]] const PlantConfig & config() const { return config_; }
  [[nodiscard]] const PlantAssets & assets() const { return *assets_; }

  // Full-scale diagnostics of the last completed step.
  [[nodiscard]] Eigen::VectorXd actual_thrust() const;
  [[nodiscard]] const Eigen::VectorXd & actual_angles() const { return alpha_act_; }
  [[nodiscard]] Vector3 thruster_load() const;
  [[nodiscard]] Vector3 environment_load() const;

  // Plant-scale actuator values (commanded, and after the lag).
  [[nodiscard]] const Eigen::VectorXd & commanded_plant_thrust() const { return u_cmd_; }
  [[nodiscard]] const Eigen::VectorXd & plant_thrust() const { return u_act_; }

private:
  std::shared_ptr<const PlantAssets> assets_;
  PlantConfig config_;
  env::EnvironmentSpec env_model_;
  env::WaveRealization waves_model_;
  hydro::VesselState state_;
  Eigen::VectorXd u_cmd_, alpha_cmd_;  // plant scale
  Eigen::VectorXd u_act_, alpha_act_;  // plant scale
  Vector6 f_thruster_{Vector6::Zero()}, f_environment_{Vector6::Zero()};  // plant scale
  std::uint64_t steps_{0};
};

struct ServeOptions
{
  std::uint64_t steps{0};  // cycles before the plant says BYE
  Millis timeout{kDefaultTimeout};
  std::function<void(const Plant &)> on_step;  // after every completed step
};

/// Plant side of the lockstep session: HELLO exchange, then per cycle
/// STATE(t) -> [PARAM -> ACK]* -> CMD(t) -> step, and BYE after
/// options.steps cycles. Any contract breach sends a BYE with the
/// diagnostic, closes the channel and throws ProtocolViolation (or Timeout).
SessionSummary serve_plant(Channel & channel, Plant & plant, const ServeOptions & options);

/// Accepts up to `sessions` connections and runs each one on its own thread
/// with a fresh plant from `make_plant`. Returns when all have finished;
/// per-session errors are reported through `on_error`.
void serve_tcp(TcpListener & listener, const std::function<std::unique_ptr<Plant>()> & make_plant,
               const ServeOptions & options, std::size_t sessions,
               const std::function<void(std::size_t, const std::exception &)> & on_error = {});

}  // namespace dpsim::link
