#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dpsim/common.hpp"

namespace dpsim::hydro
{

DPSIM_DEFINE_ERROR(DatabaseFormatError);
DPSIM_DEFINE_ERROR(InsufficientFrequencyGrid);

using ComplexVector6 = Eigen::Matrix<std::complex<double>, 6, 1>;

inline constexpr std::size_t kMinFrequencyPoints = 8;

/// Frequency-domain hydrodynamic coefficients of one hull.
///
/// Matrices are SI (kg, kg m, kg m^2 for inertia; N s/m etc. for damping).
/// Force RAOs are N (or N m) per metre of wave amplitude; the direction is
/// the wave coming-from angle relative to the bow, 0 = head sea.
struct HydroDatabase
{
  std::vector<double> freq;           // Hz, strictly increasing
  std::vector<Matrix6> added_mass;    // A(f), one per freq
  std::vector<Matrix6> damping;       // B(f), one per freq
  Matrix6 restoring{Matrix6::Zero()};
  Matrix6 rigid_mass{Matrix6::Identity()};

  std::vector<double> rao_directions;  // rad, strictly increasing in [0, 2 pi)
  std::vector<ComplexVector6> rao;     // freq-major: rao[fi * ndir + di]

  [[nodiscard]] std::size_t size() const { return freq.size(); }
  [[nodiscard]] bool has_rao() const { return !rao_directions.empty(); }

  [[nodiscard]] const ComplexVector6 & rao_at(std::size_t fi, std::size_t di) const
  {
    return rao[fi * rao_directions.size() + di];
  }

  /// Checks every structural invariant and throws DatabaseFormatError naming
  /// the first offending entry.
  void validate() const;
};

/// Throws InsufficientFrequencyGrid for short or non-ascending grids.
void check_frequency_grid(const std::vector<double> & freq);

/// Reads the sectioned text format ([FREQ], [A], [B], [C], [M_RB], [RAO]).
[[nodiscard]] HydroDatabase parse_database(std::istream & in);
[[nodiscard]] HydroDatabase load_database(const std::filesystem::path & path);

/// Writes the same format with round-trip precision.
void write_database(std::ostream & out, const HydroDatabase & db);
void save_database(const std::filesystem::path & path, const HydroDatabase & db);

}  // namespace dpsim::hydro
