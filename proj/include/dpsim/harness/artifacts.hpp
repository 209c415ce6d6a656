#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpsim/harness/run.hpp"

namespace dpsim::harness
{

DPSIM_DEFINE_ERROR(MissingArtifact);
DPSIM_DEFINE_ERROR(ArtifactFormatError);

inline constexpr const char * kManifestFile = "manifest.json";
inline constexpr const char * kSeriesFile = "timeseries.csv";
inline constexpr const char * kSummaryFile = "summary.csv";
inline constexpr const char * kPolarFile = "polar.csv";

/// t, step, x, y, psi, x_d, y_d, psi_d, x_r, y_r, psi_r, tau_*, f_*, s_*,
/// u_1..u_m, alpha_1..alpha_m, feasible, param_version. Numbers are written
/// in shortest round-trip form, so reading gives back the same doubles.
void write_series(const std::filesystem::path & path, const std::vector<Sample> & samples);
[[nodiscard]] std::vector<Sample> read_series(const std::filesystem::path & path);

/// metric,value rows with fixed formatting.
[[nodiscard]] std::string summary_csv(const RunSummary & s);
[[nodiscard]] std::string polar_csv(const std::vector<SweepRow> & rows);

/// Run manifest: kind, config (resolved), config hash, output files and
/// sweep bookkeeping.
[[nodiscard]] nlohmann::json make_manifest(const RunConfig & config, const std::vector<std::string> & files);

/// Writes manifest, series and summary of a single run into `dir`.
void write_run(const std::filesystem::path & dir, const RunConfig & config, const RunResult & result,
               const RunSummary & summary);

/// Writes manifest and polar table of a sweep (plus per-direction series
/// under dir_DDD/ when samples were kept). Partial sweeps record the failure.
void write_sweep(const std::filesystem::path & dir, const RunConfig & config, const SweepResult & result);

/// Derived tables for a completed run directory, written to dir/report/:
/// summary.csv, thrusters.csv (per-unit thrust share of maximum and angle
/// range), allocation_error.csv (|s| percentiles per axis) for a single run;
/// polar_offset.csv and polar_force.csv for a sweep. Returns the files
/// written. Throws MissingArtifact when the run artifacts are absent.
std::vector<std::filesystem::path> report(const std::filesystem::path & dir);

}  // namespace dpsim::harness
