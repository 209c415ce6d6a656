#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dpsim/common.hpp"
#include "dpsim/hydro/database.hpp"
#include "dpsim/hydro/types.hpp"

namespace dpsim::env
{

DPSIM_DEFINE_ERROR(RaoOutOfRange);
DPSIM_DEFINE_ERROR(CoefficientTableError);

/// Sea state and weather. Directions are "coming from", NED, radians.
struct EnvironmentSpec
{
  double hs{0.0};  // significant wave height, m
  double tp{8.0};  // peak period, s
  double wave_dir{0.0};
  double wind_speed{0.0};
  double wind_dir{0.0};
  double current_speed{0.0};
  double current_dir{0.0};
  std::uint64_t seed{1};

  void validate() const;
};

/// Position-keeping condition: all loads collinear from `dir`.
[[nodiscard]] EnvironmentSpec position_keeping_environment(double dir, std::uint64_t seed = 1);

struct WaveComponent
{
  double amplitude{0.0};  // m
  double frequency{0.0};  // Hz
  double direction{0.0};  // rad, coming from
  double phase{0.0};      // rad
};

struct WaveRealization
{
  std::vector<WaveComponent> components;

  /// Sum of a_i^2 / 2.
  [[nodiscard]] double m0() const;
};

inline constexpr double kJonswapGamma = 3.3;
inline constexpr std::size_t kMinComponents = 20;

/// JONSWAP spectral density in m^2/Hz, shape only normalised by the usual
/// A_gamma = 1 - 0.287 ln(gamma) factor.
[[nodiscard]] double jonswap_density(double f, double hs, double tp, double gamma = kJonswapGamma);

/// Equal-energy discretisation of a JONSWAP spectrum (rescaled so the
/// discretised band integrates to Hs^2/16), long-crested from spec.wave_dir,
/// phases uniform from a seeded generator. Throws std::invalid_argument when
/// n_components < 20.
[[nodiscard]] WaveRealization realize_spectrum(const EnvironmentSpec & spec, std::size_t n_components);

/// First-order wave load in kN / kN m (body frame) from linear superposition
/// of RAO-scaled harmonics. The RAO is interpolated linearly in frequency
/// and (periodically) in heading-relative direction; frequencies up to 10%
/// beyond the grid are clamped to the edge, further out throws RaoOutOfRange.
[[nodiscard]] Vector6 wave_force(const WaveRealization & waves, const hydro::HydroDatabase & db,
                                 const hydro::Pose6 & eta, double t);

/// Interpolated complex force RAO at (f, beta); exposed for tests.
[[nodiscard]] hydro::ComplexVector6 interpolate_rao(const hydro::HydroDatabase & db, double f, double beta);

/// Surge/sway/yaw force coefficients against relative coming-from angle,
/// piecewise linear and periodic over 360 deg.
class CoefficientTable
{
public:
  struct Row
  {
    double dir_deg, cx, cy, cn;
  };

  CoefficientTable() = default;
  explicit CoefficientTable(std::vector<Row> rows);

  /// CSV with columns direction_deg, cx, cy, cn; '#' comments, optional header.
  [[nodiscard]] static CoefficientTable load(const std::filesystem::path & path);

  /// Smooth default: cx = -cx0 cos b, cy = -cy0 sin b, cn = -cn0 sin 2b on 10 deg rows.
  [[nodiscard]] static CoefficientTable sinusoidal(double cx0, double cy0, double cn0);

  /// Returns (cx, cy, cn) at the relative angle beta (rad).
  [[nodiscard]] Vector3 at(double beta) const;

  [[nodiscard]] const std::vector<Row> & rows() const { return rows_; }

  void save(const std::filesystem::path & path) const;

private:
  std::vector<Row> rows_;
};

/// Quadratic drag for one medium: F = 1/2 rho coef A V_rel^2 per axis,
/// frontal area for surge, lateral area for sway, lateral area x length for yaw.
struct DragModel
{
  CoefficientTable table;
  double density{1.0};
  double frontal_area{0.0};
  double lateral_area{0.0};
  double length{0.0};
};

struct WindCurrentModel
{
  DragModel wind;
  DragModel current;
  /// Optional constant mean drift, kN (kN m) per m^2 of Hs^2 against the
  /// wave relative direction; empty table = off.
  CoefficientTable drift;
};

/// Default wind and current model of the full-scale shuttle tanker.
[[nodiscard]] WindCurrentModel st_wind_current_model();

/// Load of one medium flowing at `speed` from NED direction `dir` on a hull
/// moving with body velocity nu. kN / kN m, body frame.
[[nodiscard]] Vector3 drag_force(const DragModel & model, double speed, double dir, const hydro::Pose6 & eta,
                                 const hydro::BodyVel6 & nu);

/// Wind + current (+ mean drift if configured), as a body-frame 6-vector
/// in kN / kN m.
[[nodiscard]] Vector6 wind_current_force(const EnvironmentSpec & spec, const WindCurrentModel & model,
                                         const hydro::Pose6 & eta, const hydro::BodyVel6 & nu);

}  // namespace dpsim::env
