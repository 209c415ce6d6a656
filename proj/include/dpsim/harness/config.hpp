#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsim/allocation/allocation.hpp"
#include "dpsim/control/control.hpp"
#include "dpsim/control/params.hpp"
#include "dpsim/environment/environment.hpp"
#include "dpsim/link/plant.hpp"

namespace dpsim::harness
{

DPSIM_DEFINE_ERROR(ConfigError);

enum class ScenarioKind
{
  position_keeping,
  capability_sweep,
  four_corner,
};

[[nodiscard]] std::string to_string(ScenarioKind k);
[[nodiscard]] ScenarioKind parse_scenario_kind(const std::string & s);

/// From time t on, the setpoint is `target`.
struct SetpointEvent
{
  double t{0.0};
  control::Setpoint target{};
};

/// Where the vessel data comes from. "builtin" selects the shipped shuttle
/// tanker; anything else is a file path.
struct VesselSpec
{
  std::string database{"builtin"};              // .hydro file
  std::string layout{"builtin"};                // thruster CSV
  std::string wind_coefficients{"builtin"};     // direction_deg,cx,cy,cn
  std::string current_coefficients{"builtin"};
  std::string manifest{"builtin"};              // parameter manifest JSON
  scaling::ScaleSpec scale{};                   // plant scale
};

struct FourCornerSpec
{
  double side{40.0};      // m
  double dwell{600.0};    // s per corner
  double heading{0.0};    // rad, held throughout
  double steady_window{120.0};  // s at the end of each dwell judged as steady
};

struct ScenarioSpec
{
  ScenarioKind kind{ScenarioKind::position_keeping};
  /// For a sweep the directions are overwritten per run, magnitudes kept.
  env::EnvironmentSpec environment{env::position_keeping_environment(0.0)};
  double duration{3600.0};  // s, full scale
  double settle{600.0};     // statistics only over [settle, duration]
  double step{link::kDefaultStep};
  std::size_t wave_components{100};
  double thruster_lag{link::kDefaultThrusterLag};
  std::uint64_t seed{1};
  /// Position keeping: empty holds the origin at zero heading.
  std::vector<SetpointEvent> script;
  double sweep_resolution_deg{15.0};
  unsigned workers{0};  // parallel sweep sessions; 0 = hardware threads
  FourCornerSpec four_corner{};

  /// Throws ConfigError.
  void validate() const;

  /// Sweep directions in rad, 0 up to (not including) 360 deg.
  [[nodiscard]] std::vector<double> sweep_directions() const;

  /// The setpoint sequence actually flown (script, four-corner box or the
  /// origin hold).
  [[nodiscard]] std::vector<SetpointEvent> setpoints() const;
};

/// Four corners of a `side` box starting and ending at the origin:
/// ahead, then to starboard, back, and home, one dwell each.
[[nodiscard]] std::vector<SetpointEvent> four_corner_script(const FourCornerSpec & spec);

/// Everything a run needs. JSON keys mirror the field names.
struct RunConfig
{
  VesselSpec vessel{};
  ScenarioSpec scenario{};
  std::map<std::string, double> params;       // registry overrides
  std::map<std::string, std::string> slots;   // algorithm bindings

  [[nodiscard]] static RunConfig defaults(ScenarioKind kind);
  /// Missing keys keep their defaults for the given kind; unknown keys throw.
  [[nodiscard]] static RunConfig from_json(const nlohmann::json & j);
  [[nodiscard]] static RunConfig load(const std::filesystem::path & path);
  [[nodiscard]] nlohmann::json to_json() const;

  /// SHA-256 (hex) of the canonical JSON of the resolved config.
  [[nodiscard]] std::string hash() const;

  /// A registry with the manifest and every override applied (one version
  /// bump for the values, one per slot).
  [[nodiscard]] std::shared_ptr<control::ParamRegistry> make_registry() const;
};

/// Full-scale data of the vessel.
struct VesselData
{
  hydro::HydroDatabase database;
  alloc::ThrusterLayout layout;
  env::WindCurrentModel drag;
};

/// Loads or builds the vessel data named by the spec (paths relative to
/// `base`). Throws ConfigError naming the file that failed.
[[nodiscard]] VesselData load_vessel(const VesselSpec & spec, const std::filesystem::path & base = {});

/// Full-scale vessel data plus the plant assets built from it.
struct RunAssets
{
  VesselData vessel;
  std::shared_ptr<const link::PlantAssets> plant;
};

/// Assets for a config; expensive (kernel quadrature), share them.
[[nodiscard]] std::shared_ptr<const RunAssets> build_assets(const RunConfig & config,
                                                           const std::filesystem::path & base = {});

}  // namespace dpsim::harness
