#pragma once

#include <string_view>

#include "dpsim/common.hpp"
#include "dpsim/environment/environment.hpp"
#include "dpsim/hydro/database.hpp"

namespace dpsim::scaling
{

DPSIM_DEFINE_ERROR(UnknownKind);

/// Froude similarity between a full-scale ship and a 1:lambda model.
struct ScaleSpec
{
  double lambda{1.0};  // L_full / L_model
  double gamma{1.0};   // rho_full / rho_model

  void validate() const;

  /// Sea water over fresh water.
  static constexpr double kSeawaterGamma = 1.025;
  [[nodiscard]] static ScaleSpec seawater(double lambda) { return {lambda, kSeawaterGamma}; }

  [[nodiscard]] bool is_identity() const { return lambda == 1.0 && gamma == 1.0; }
};

enum class Kind
{
  length,
  angle,
  lin_velocity,
  ang_velocity,
  force,
  moment,
  time,
  mass,
  frequency,
};

[[nodiscard]] Kind parse_kind(std::string_view name);
[[nodiscard]] std::string_view to_string(Kind kind);

/// full / model ratio for one kind. Exactly 1 when lambda = gamma = 1.
[[nodiscard]] double factor(Kind kind, const ScaleSpec & s);

[[nodiscard]] double to_full_scale(double q, Kind kind, const ScaleSpec & s);
[[nodiscard]] double to_model_scale(double q, Kind kind, const ScaleSpec & s);

/// 6-DOF vector helpers: translations then rotations.
[[nodiscard]] Vector6 pose_to_full(const Vector6 & eta, const ScaleSpec & s);
[[nodiscard]] Vector6 pose_to_model(const Vector6 & eta, const ScaleSpec & s);
[[nodiscard]] Vector6 velocity_to_full(const Vector6 & nu, const ScaleSpec & s);
[[nodiscard]] Vector6 velocity_to_model(const Vector6 & nu, const ScaleSpec & s);
[[nodiscard]] Vector6 load_to_full(const Vector6 & f, const ScaleSpec & s);
[[nodiscard]] Vector6 load_to_model(const Vector6 & f, const ScaleSpec & s);

/// Model-scale equivalent of a full-scale database: frequencies, inertia,
/// damping, restoring and force RAOs converted entry by entry.
[[nodiscard]] hydro::HydroDatabase database_to_model(const hydro::HydroDatabase & full, const ScaleSpec & s);

/// Model-scale sea state and drag model (areas, lengths, densities).
[[nodiscard]] env::EnvironmentSpec environment_to_model(const env::EnvironmentSpec & full, const ScaleSpec & s);
[[nodiscard]] env::WindCurrentModel drag_model_to_model(const env::WindCurrentModel & full, const ScaleSpec & s);
[[nodiscard]] env::WaveRealization waves_to_model(const env::WaveRealization & full, const ScaleSpec & s);

}  // namespace dpsim::scaling
