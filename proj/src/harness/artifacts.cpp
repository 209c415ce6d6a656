#include "dpsim/harness/artifacts.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace dpsim::harness
{

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

std::vector<std::string> split(const std::string & line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) {
      return out;
    }
    start = comma + 1;
  }
}

double parse_double(const std::string & s, const fs::path & path, std::size_t line)
{
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ArtifactFormatError(fmt::format("{}:{}: '{}' is not a number", path.string(), line, s));
  }
  return v;
}

void write_text(const fs::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  }
  out << text;
}

std::string read_text(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingArtifact(fmt::format("cannot read '{}'", path.string()));
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_manifest(const fs::path & dir)
{
  const fs::path p = dir / kManifestFile;
  if (!fs::exists(p)) {
    throw MissingArtifact(fmt::format("no {} in '{}'", kManifestFile, dir.string()));
  }
  try {
    return json::parse(read_text(p));
  } catch (const json::exception & e) {
    throw ArtifactFormatError(fmt::format("{}: {}", p.string(), e.what()));
  }
}

std::string num(double v) { return fmt::format("{:.6f}", v); }

std::string direction_dir(double direction)
{
  return fmt::format("dir_{:03d}", static_cast<int>(std::lround(rad2deg(direction))));
}

}  // namespace

void write_series(const fs::path & path, const std::vector<Sample> & samples)
{
  const Eigen::Index m = samples.empty() ? 0 : samples.front().u.size();
  std::string out = "t,step,x,y,psi,x_d,y_d,psi_d,x_r,y_r,psi_r,tau_x,tau_y,tau_n,f_x,f_y,f_n,s_x,s_y,s_n";
  for (Eigen::Index i = 1; i <= m; ++i) {
    out += fmt::format(",u_{}", i);
  }
  for (Eigen::Index i = 1; i <= m; ++i) {
    out += fmt::format(",alpha_{}", i);
  }
  out += ",feasible,param_version\n";
  for (const auto & s : samples) {
    out += fmt::format("{},{}", s.t, s.step);
    for (const Vector3 * v : {&s.eta, &s.eta_d, &s.setpoint, &s.tau, &s.achieved, &s.slack}) {
      out += fmt::format(",{},{},{}", (*v)(0), (*v)(1), (*v)(2));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      out += fmt::format(",{}", s.u(i));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      out += fmt::format(",{}", s.alpha(i));
    }
    out += fmt::format(",{},{}\n", s.feasible ? 1 : 0, s.param_version);
  }
  write_text(path, out);
}

std::vector<Sample> read_series(const fs::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw MissingArtifact(fmt::format("no time series at '{}'", path.string()));
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ArtifactFormatError(fmt::format("{}: empty file", path.string()));
  }
  const auto header = split(line);
  constexpr std::size_t fixed = 20;
  if (header.size() < fixed + 2 || (header.size() - fixed - 2) % 2 != 0 || header[0] != "t") {
    throw ArtifactFormatError(fmt::format("{}: unexpected header", path.string()));
  }
  const std::size_t m = (header.size() - fixed - 2) / 2;
  std::vector<Sample> samples;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw ArtifactFormatError(fmt::format("{}:{}: {} fields, header has {}", path.string(), lineno, f.size(),
                                            header.size()));
    }
    auto d = [&](std::size_t i) { return parse_double(f[i], path, lineno); };
    Sample s;
    s.t = d(0);
    s.step = static_cast<std::uint64_t>(d(1));
    std::size_t k = 2;
    for (Vector3 * v : {&s.eta, &s.eta_d, &s.setpoint, &s.tau, &s.achieved, &s.slack}) {
      *v = Vector3(d(k), d(k + 1), d(k + 2));
      k += 3;
    }
    s.u.resize(static_cast<Eigen::Index>(m));
    s.alpha.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      s.u(static_cast<Eigen::Index>(i)) = d(k + i);
      s.alpha(static_cast<Eigen::Index>(i)) = d(k + m + i);
    }
    s.feasible = d(k + 2 * m) != 0.0;
    s.param_version = static_cast<std::uint64_t>(d(k + 2 * m + 1));
    samples.push_back(std::move(s));
  }
  return samples;
}

std::string summary_csv(const RunSummary & s)
{
  std::string out = "metric,value\n";
  auto row = [&](const std::string & k, const std::string & v) { out += k + "," + v + "\n"; };
  row("samples", std::to_string(s.samples));
  row("violations", std::to_string(s.violations));
  row("max_offset_m", num(s.max_offset));
  row("max_heading_deg", num(s.max_heading_deg));
  const char * axes[] = {"x", "y", "n"};
  for (int i = 0; i < 3; ++i) {
    row(fmt::format("mean_force_{}", axes[i]), num(s.mean_force(i)));
  }
  for (int i = 0; i < 3; ++i) {
    row(fmt::format("mean_abs_tau_{}", axes[i]), num(s.mean_abs_tau(i)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    row(fmt::format("slack_p50_{}", axes[i]), num(s.slack[i].p50));
    row(fmt::format("slack_p95_{}", axes[i]), num(s.slack[i].p95));
    row(fmt::format("slack_max_{}", axes[i]), num(s.slack[i].max));
    row(fmt::format("slack_p95_relative_{}", axes[i]), num(s.slack_p95_relative(static_cast<int>(i))));
  }
  if (!std::isnan(s.steady_error)) {
    row("steady_error_m", num(s.steady_error));
    row("peak_error_m", num(s.peak_error));
    row("max_heading_error_deg", num(s.max_heading_error_deg));
  }
  return out;
}

std::string polar_csv(const std::vector<SweepRow> & rows)
{
  std::string out =
    "direction_deg,max_offset_m,max_heading_deg,mean_x_kn,mean_y_kn,mean_n_knm,"
    "slack_p95_rel_x,slack_p95_rel_y,slack_p95_rel_n,violations\n";
  for (const auto & r : rows) {
    const auto & s = r.summary;
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", num(rad2deg(r.direction)), num(s.max_offset),
                       num(s.max_heading_deg), num(s.mean_force(0)), num(s.mean_force(1)), num(s.mean_force(2)),
                       num(s.slack_p95_relative(0)), num(s.slack_p95_relative(1)), num(s.slack_p95_relative(2)),
                       s.violations);
  }
  return out;
}

json make_manifest(const RunConfig & config, const std::vector<std::string> & files)
{
  return {{"format", 1},
          {"kind", to_string(config.scenario.kind)},
          {"config", config.to_json()},
          {"config_hash", config.hash()},
          {"files", files}};
}

void write_run(const fs::path & dir, const RunConfig & config, const RunResult & result, const RunSummary & summary)
{
  fs::create_directories(dir);
  write_series(dir / kSeriesFile, result.samples);
  write_text(dir / kSummaryFile, summary_csv(summary));
  json m = make_manifest(config, {kSeriesFile, kSummaryFile});
  m["session"] = {{"steps", result.session.controller.steps}, {"reason", result.session.plant.reason}};
  write_text(dir / kManifestFile, m.dump(2) + "\n");
}

void write_sweep(const fs::path & dir, const RunConfig & config, const SweepResult & result)
{
  fs::create_directories(dir);
  std::vector<std::string> files{kPolarFile};
  for (const auto & r : result.rows) {
    if (!r.samples.empty()) {
      const fs::path sub = dir / direction_dir(r.direction);
      fs::create_directories(sub);
      const RunConfig c = sweep_direction_config(config, r.direction);
      write_series(sub / kSeriesFile, r.samples);
      write_text(sub / kSummaryFile, summary_csv(r.summary));
      write_text(sub / kManifestFile, make_manifest(c, {kSeriesFile, kSummaryFile}).dump(2) + "\n");
      files.push_back(direction_dir(r.direction));
    }
  }
  write_text(dir / kPolarFile, polar_csv(result.rows));
  json m = make_manifest(config, files);
  m["sweep"] = {{"requested", result.requested}, {"completed", result.rows.size()}};
  if (result.failed_index) {
    m["sweep"]["failed_index"] = *result.failed_index;
    try {
      std::rethrow_exception(result.error);
    } catch (const std::exception & e) {
      m["sweep"]["error"] = e.what();
    } catch (...) {
      m["sweep"]["error"] = "unknown error";
    }
  }
  write_text(dir / kManifestFile, m.dump(2) + "\n");
}

namespace
{

std::vector<fs::path> report_single(const fs::path & dir, const RunConfig & config)
{
  const auto samples = read_series(dir / kSeriesFile);
  const fs::path out = dir / "report";
  fs::create_directories(out);
  std::vector<fs::path> written;

  const RunSummary s = summarize(samples, config.scenario);
  write_text(out / kSummaryFile, summary_csv(s));
  written.push_back(out / kSummaryFile);

  const auto layout = load_vessel(config.vessel).layout;
  std::vector<const Sample *> window;
  for (const auto & smp : samples) {
    if (smp.t >= config.scenario.settle) {
      window.push_back(&smp);
    }
  }
  std::string th = "thruster,kind,rated_kn,mean_abs_kn,max_abs_kn,mean_share_pct,max_share_pct,alpha_min_deg,alpha_max_deg\n";
  std::string series = "t";
  for (std::size_t i = 0; i < layout.size(); ++i) {
    series += fmt::format(",share_pct_{0},alpha_deg_{0}", i + 1);
  }
  series += "\n";
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto & tr = layout[i];
    const auto k = static_cast<Eigen::Index>(i);
    const double rated = std::max(std::abs(tr.u_min), std::abs(tr.u_max));
    double sum = 0.0, peak = 0.0;
    double amin = control::kUnlimited, amax = -control::kUnlimited;
    for (const Sample * p : window) {
      if (p->u.size() <= k) {
        throw ArtifactFormatError(fmt::format("time series has {} thrusters, layout {}", p->u.size(), layout.size()));
      }
      sum += std::abs(p->u(k));
      peak = std::max(peak, std::abs(p->u(k)));
      amin = std::min(amin, rad2deg(p->alpha(k)));
      amax = std::max(amax, rad2deg(p->alpha(k)));
    }
    const double mean = window.empty() ? 0.0 : sum / static_cast<double>(window.size());
    if (window.empty()) {
      amin = amax = 0.0;
    }
    th += fmt::format("{},{},{},{},{},{},{},{},{}\n", tr.name, alloc::to_string(tr.kind), num(rated), num(mean),
                      num(peak), num(100.0 * mean / rated), num(100.0 * peak / rated), num(amin), num(amax));
  }
  for (const Sample * p : window) {
    series += num(p->t);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double rated = std::max(std::abs(layout[i].u_min), std::abs(layout[i].u_max));
      series += "," + num(100.0 * p->u(k) / rated) + "," + num(rad2deg(p->alpha(k)));
    }
    series += "\n";
  }
  write_text(out / "thrusters.csv", th);
  write_text(out / "thruster_series.csv", series);
  written.push_back(out / "thrusters.csv");
  written.push_back(out / "thruster_series.csv");

  std::string ae = "axis,p50_abs_s,p95_abs_s,max_abs_s,mean_abs_tau,p95_relative\n";
  const char * axes[] = {"x", "y", "n"};
  for (std::size_t i = 0; i < 3; ++i) {
    ae += fmt::format("{},{},{},{},{},{}\n", axes[i], num(s.slack[i].p50), num(s.slack[i].p95), num(s.slack[i].max),
                      num(s.mean_abs_tau(static_cast<int>(i))), num(s.slack_p95_relative(static_cast<int>(i))));
  }
  write_text(out / "allocation_error.csv", ae);
  written.push_back(out / "allocation_error.csv");
  return written;
}

std::vector<fs::path> report_sweep(const fs::path & dir, const json & manifest)
{
  const fs::path polar = dir / kPolarFile;
  if (!fs::exists(polar)) {
    throw MissingArtifact(fmt::format("no {} in '{}'", kPolarFile, dir.string()));
  }
  std::istringstream in(read_text(polar));
  std::string line;
  std::getline(in, line);
  std::string offset = "direction_deg,max_offset_m,max_heading_deg\n";
  std::string force = "direction_deg,mean_x_kn,mean_y_kn,mean_n_knm\n";
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = split(line);
    if (f.size() < 6) {
      throw ArtifactFormatError(fmt::format("{}: short row '{}'", polar.string(), line));
    }
    offset += fmt::format("{},{},{}\n", f[0], f[1], f[2]);
    force += fmt::format("{},{},{},{}\n", f[0], f[3], f[4], f[5]);
  }
  const fs::path out = dir / "report";
  fs::create_directories(out);
  write_text(out / "polar_offset.csv", offset);
  write_text(out / "polar_force.csv", force);
  std::vector<fs::path> written{out / "polar_offset.csv", out / "polar_force.csv"};
  for (const auto & f : manifest.value("files", json::array())) {
    const fs::path sub = dir / f.get<std::string>();
    if (fs::is_directory(sub)) {
      const auto more = report(sub);
      written.insert(written.end(), more.begin(), more.end());
    }
  }
  return written;
}

}  // namespace

std::vector<fs::path> report(const fs::path & dir)
{
  if (!fs::is_directory(dir)) {
    throw MissingArtifact(fmt::format("'{}' is not a run directory", dir.string()));
  }
  const json manifest = read_manifest(dir);
  RunConfig config;
  try {
    config = RunConfig::from_json(manifest.at("config"));
  } catch (const json::exception & e) {
    throw ArtifactFormatError(fmt::format("{}: {}", (dir / kManifestFile).string(), e.what()));
  }
  if (config.scenario.kind == ScenarioKind::capability_sweep) {
    return report_sweep(dir, manifest);
  }
  return report_single(dir, config);
}

}  // namespace dpsim::harness
