#pragma once

#include <array>

#include "dpsim/hydro/database.hpp"

namespace dpsim::hydro
{

/// Principal particulars of a shuttle tanker hull used by the analytic
/// database generator. Defaults are the full-scale ST of the testbed.
struct HullParticulars
{
  double length{137.0};         // m, overall
  double breadth{22.8};         // m
  double draught{8.655};        // m
  double displacement{21402e3};  // kg
  double water_density{1025.0};  // kg/m^3
  double gm_transverse{2.5};     // m
  double gm_longitudinal{180.0};  // m
};

/// Gaussian-in-frequency radiation damping B(w) = b e x^2 exp(-x^2),
/// x = w / w_peak. Peaks at b for w = w_peak.
struct DampingMode
{
  double peak{0.0};        // SI damping units
  double omega_peak{1.0};  // rad/s
};

struct SyntheticHullSpec
{
  HullParticulars hull{};
  std::array<DampingMode, 6> damping{};
  std::array<double, 6> added_mass_inf{};  // diagonal A(inf), SI
  std::vector<double> freq;                // Hz
  std::vector<double> rao_directions_deg;
};

/// Default specification for the full-scale shuttle tanker.
[[nodiscard]] SyntheticHullSpec st_hull_spec();

/// Builds a consistent database: B(f) from the damping modes, A(f) from the
/// exact Kramers-Kronig pair of that damping about A(inf), hydrostatics and
/// rigid-body inertia from the hull particulars, and smooth force RAOs.
[[nodiscard]] HydroDatabase make_synthetic_database(const SyntheticHullSpec & spec);

/// Shortcut: make_synthetic_database(st_hull_spec()).
[[nodiscard]] HydroDatabase st_hull_database();

/// Box-car damping B(f) = b0 I on an n-point uniform grid (F/n .. F),
/// constant A(f) = a0 I, unit mass, zero restoring. No RAOs.
[[nodiscard]] HydroDatabase boxcar_database(double b0, double band_hz, std::size_t n, double a0 = 0.0);

/// Closed-form pieces of one Gaussian damping mode.
[[nodiscard]] double gaussian_damping(const DampingMode & mode, double omega);
[[nodiscard]] double gaussian_kernel(const DampingMode & mode, double t);
[[nodiscard]] double gaussian_added_mass_offset(const DampingMode & mode, double omega);

}  // namespace dpsim::hydro
