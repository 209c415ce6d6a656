#include "dpsim/harness/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>

#include "dpsim/hydro/synthetic.hpp"

namespace dpsim::harness
{

using nlohmann::json;

std::string to_string(ScenarioKind k)
{
  switch (k) {
    case ScenarioKind::position_keeping:
      return "position_keeping";
    case ScenarioKind::capability_sweep:
      return "capability_sweep";
    case ScenarioKind::four_corner:
      return "four_corner";
  }
  return "?";
}

ScenarioKind parse_scenario_kind(const std::string & s)
{
  for (auto k : {ScenarioKind::position_keeping, ScenarioKind::capability_sweep, ScenarioKind::four_corner}) {
    if (to_string(k) == s) {
      return k;
    }
  }
  throw ConfigError(fmt::format("unknown scenario kind '{}'", s));
}

void ScenarioSpec::validate() const
{
  auto bad = [](const std::string & why) { throw ConfigError(why); };
  if (!(step > 0.0) || !std::isfinite(step)) {
    bad(fmt::format("step must be > 0, got {}", step));
  }
  if (!(settle >= 0.0) || !std::isfinite(settle)) {
    bad(fmt::format("settle must be >= 0, got {}", settle));
  }
  if (!(duration > settle) || !std::isfinite(duration)) {
    bad(fmt::format("duration {} must exceed the settle time {}", duration, settle));
  }
  if (!(thruster_lag >= 0.0)) {
    bad(fmt::format("thruster_lag must be >= 0, got {}", thruster_lag));
  }
  if (wave_components < env::kMinComponents) {
    bad(fmt::format("wave_components must be >= {}, got {}", env::kMinComponents, wave_components));
  }
  try {
    environment.validate();
  } catch (const std::exception & e) {
    bad(e.what());
  }
  if (kind == ScenarioKind::capability_sweep) {
    if (!(sweep_resolution_deg > 0.0 && sweep_resolution_deg <= 360.0)) {
      bad(fmt::format("sweep resolution must be in (0, 360] deg, got {}", sweep_resolution_deg));
    }
    const double n = 360.0 / sweep_resolution_deg;
    if (std::abs(n - std::round(n)) > 1e-9) {
      bad(fmt::format("sweep resolution {} deg does not divide 360", sweep_resolution_deg));
    }
  }
  if (kind == ScenarioKind::four_corner) {
    const auto & f = four_corner;
    if (!(f.side > 0.0) || !(f.dwell > 0.0) || !(f.steady_window > 0.0 && f.steady_window <= f.dwell)) {
      bad("four-corner side and dwell must be > 0 and the steady window within the dwell");
    }
  }
  double last = -1.0;
  for (const auto & e : script) {
    if (!(e.t >= last)) {
      bad("setpoint script times must be non-decreasing and >= 0");
    }
    last = e.t;
  }
}

std::vector<double> ScenarioSpec::sweep_directions() const
{
  const auto n = static_cast<std::size_t>(std::llround(360.0 / sweep_resolution_deg));
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = deg2rad(sweep_resolution_deg * static_cast<double>(i));
  }
  return d;
}

std::vector<SetpointEvent> four_corner_script(const FourCornerSpec & spec)
{
  const double s = spec.side, w = spec.dwell, h = spec.heading;
  return {
    {0.0, control::Setpoint::make(0.0, 0.0, h)},
    {w, control::Setpoint::make(s, 0.0, h)},
    {2.0 * w, control::Setpoint::make(s, s, h)},
    {3.0 * w, control::Setpoint::make(0.0, s, h)},
    {4.0 * w, control::Setpoint::make(0.0, 0.0, h)},
  };
}

std::vector<SetpointEvent> ScenarioSpec::setpoints() const
{
  if (!script.empty()) {
    return script;
  }
  if (kind == ScenarioKind::four_corner) {
    return four_corner_script(four_corner);
  }
  return {{0.0, control::Setpoint{}}};
}

RunConfig RunConfig::defaults(ScenarioKind kind)
{
  RunConfig c;
  c.scenario.kind = kind;
  if (kind == ScenarioKind::four_corner) {
    // The box manoeuvre is a still-water test.
    c.scenario.environment = env::EnvironmentSpec{};
    c.scenario.settle = 0.0;
    c.scenario.duration = 5.0 * c.scenario.four_corner.dwell;
  }
  return c;
}

namespace
{

// Reads `key` into `out` when present; records it as consumed.
template <class T>
void take(const json & j, const char * key, T & out, std::set<std::string> & seen)
{
  seen.insert(key);
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception & e) {
      throw ConfigError(fmt::format("'{}': {}", key, e.what()));
    }
  }
}

void take_deg(const json & j, const char * key, double & rad, std::set<std::string> & seen)
{
  double d = rad2deg(rad);
  take(j, key, d, seen);
  rad = deg2rad(d);
}

void reject_unknown(const json & j, const std::set<std::string> & seen, const std::string & where)
{
  if (!j.is_object()) {
    throw ConfigError(fmt::format("'{}' must be an object", where));
  }
  for (const auto & [k, v] : j.items()) {
    if (!seen.contains(k)) {
      throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
    }
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json & j)
{
  if (!j.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  std::set<std::string> top;
  std::string kind = "position_keeping";
  if (j.contains("scenario") && j["scenario"].contains("kind")) {
    kind = j["scenario"]["kind"].get<std::string>();
  }
  RunConfig c = defaults(parse_scenario_kind(kind));

  if (j.contains("vessel")) {
    const json & v = j["vessel"];
    std::set<std::string> seen;
    take(v, "database", c.vessel.database, seen);
    take(v, "layout", c.vessel.layout, seen);
    take(v, "wind_coefficients", c.vessel.wind_coefficients, seen);
    take(v, "current_coefficients", c.vessel.current_coefficients, seen);
    take(v, "manifest", c.vessel.manifest, seen);
    take(v, "lambda", c.vessel.scale.lambda, seen);
    take(v, "gamma", c.vessel.scale.gamma, seen);
    reject_unknown(v, seen, "vessel");
  }
  top.insert("vessel");

  if (j.contains("scenario")) {
    const json & s = j["scenario"];
    ScenarioSpec & sc = c.scenario;
    std::set<std::string> seen{"kind"};
    take(s, "duration", sc.duration, seen);
    take(s, "settle", sc.settle, seen);
    take(s, "step", sc.step, seen);
    take(s, "wave_components", sc.wave_components, seen);
    take(s, "thruster_lag", sc.thruster_lag, seen);
    take(s, "seed", sc.seed, seen);
    take(s, "sweep_resolution_deg", sc.sweep_resolution_deg, seen);
    take(s, "workers", sc.workers, seen);
    seen.insert("environment");
    if (s.contains("environment")) {
      const json & e = s["environment"];
      std::set<std::string> es;
      take(e, "hs", sc.environment.hs, es);
      take(e, "tp", sc.environment.tp, es);
      take_deg(e, "wave_dir_deg", sc.environment.wave_dir, es);
      take(e, "wind_speed", sc.environment.wind_speed, es);
      take_deg(e, "wind_dir_deg", sc.environment.wind_dir, es);
      take(e, "current_speed", sc.environment.current_speed, es);
      take_deg(e, "current_dir_deg", sc.environment.current_dir, es);
      reject_unknown(e, es, "scenario.environment");
    }
    seen.insert("four_corner");
    if (s.contains("four_corner")) {
      const json & f = s["four_corner"];
      std::set<std::string> fs;
      take(f, "side", sc.four_corner.side, fs);
      take(f, "dwell", sc.four_corner.dwell, fs);
      take_deg(f, "heading_deg", sc.four_corner.heading, fs);
      take(f, "steady_window", sc.four_corner.steady_window, fs);
      reject_unknown(f, fs, "scenario.four_corner");
      if (!s.contains("duration") && sc.kind == ScenarioKind::four_corner) {
        sc.duration = 5.0 * sc.four_corner.dwell;
      }
    }
    seen.insert("script");
    if (s.contains("script")) {
      for (const json & e : s["script"]) {
        std::set<std::string> es;
        double t = 0.0, x = 0.0, y = 0.0, psi = 0.0;
        take(e, "t", t, es);
        take(e, "x", x, es);
        take(e, "y", y, es);
        take_deg(e, "psi_deg", psi, es);
        reject_unknown(e, es, "scenario.script[]");
        sc.script.push_back({t, control::Setpoint::make(x, y, psi)});
      }
    }
    reject_unknown(s, seen, "scenario");
  }
  top.insert("scenario");
  c.scenario.environment.seed = c.scenario.seed;

  take(j, "params", c.params, top);
  take(j, "slots", c.slots, top);
  reject_unknown(j, top, "config");
  c.scenario.validate();
  c.vessel.scale.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception & e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

json RunConfig::to_json() const
{
  const ScenarioSpec & s = scenario;
  json script = json::array();
  for (const auto & e : s.script) {
    script.push_back({{"t", e.t}, {"x", e.target.x}, {"y", e.target.y}, {"psi_deg", rad2deg(e.target.psi)}});
  }
  return {
    {"vessel",
     {{"database", vessel.database},
      {"layout", vessel.layout},
      {"wind_coefficients", vessel.wind_coefficients},
      {"current_coefficients", vessel.current_coefficients},
      {"manifest", vessel.manifest},
      {"lambda", vessel.scale.lambda},
      {"gamma", vessel.scale.gamma}}},
    {"scenario",
     {{"kind", to_string(s.kind)},
      {"duration", s.duration},
      {"settle", s.settle},
      {"step", s.step},
      {"wave_components", s.wave_components},
      {"thruster_lag", s.thruster_lag},
      {"seed", s.seed},
      {"sweep_resolution_deg", s.sweep_resolution_deg},
      {"workers", s.workers},
      {"environment",
       {{"hs", s.environment.hs},
        {"tp", s.environment.tp},
        {"wave_dir_deg", rad2deg(s.environment.wave_dir)},
        {"wind_speed", s.environment.wind_speed},
        {"wind_dir_deg", rad2deg(s.environment.wind_dir)},
        {"current_speed", s.environment.current_speed},
        {"current_dir_deg", rad2deg(s.environment.current_dir)}}},
      {"four_corner",
       {{"side", s.four_corner.side},
        {"dwell", s.four_corner.dwell},
        {"heading_deg", rad2deg(s.four_corner.heading)},
        {"steady_window", s.four_corner.steady_window}}},
      {"script", script}}},
    {"params", params},
    {"slots", slots},
  };
}

std::string RunConfig::hash() const
{
  const std::string text = to_json().dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += fmt::format("{:02x}", digest[i]);
  }
  return hex;
}

std::shared_ptr<control::ParamRegistry> RunConfig::make_registry() const
{
  auto manifest = vessel.manifest == "builtin" ? control::ParamManifest::builtin()
                                               : control::ParamManifest::load(vessel.manifest);
  auto r = std::make_shared<control::ParamRegistry>(std::move(manifest));
  if (!params.empty()) {
    r->set_many({params.begin(), params.end()});
  }
  for (const auto & [slot, algorithm] : slots) {
    r->bind(slot, algorithm);
  }
  return r;
}

VesselData load_vessel(const VesselSpec & spec, const std::filesystem::path & base)
{
  auto resolve = [&](const std::string & p) { return base.empty() ? std::filesystem::path(p) : base / p; };
  auto guarded = [&](const std::string & what, const std::string & p, auto && fn) {
    try {
      return fn(resolve(p));
    } catch (const std::exception & e) {
      throw ConfigError(fmt::format("{} '{}': {}", what, p, e.what()));
    }
  };
  VesselData v;
  v.database = spec.database == "builtin"
                 ? hydro::st_hull_database()
                 : guarded("database", spec.database, [](const auto & p) { return hydro::load_database(p); });
  v.layout = spec.layout == "builtin"
               ? alloc::ThrusterLayout::shuttle_tanker()
               : guarded("layout", spec.layout, [](const auto & p) { return alloc::ThrusterLayout::load(p); });
  v.drag = env::st_wind_current_model();
  if (spec.wind_coefficients != "builtin") {
    v.drag.wind.table = guarded("wind coefficients", spec.wind_coefficients,
                                [](const auto & p) { return env::CoefficientTable::load(p); });
  }
  if (spec.current_coefficients != "builtin") {
    v.drag.current.table = guarded("current coefficients", spec.current_coefficients,
                                   [](const auto & p) { return env::CoefficientTable::load(p); });
  }
  return v;
}

std::shared_ptr<const RunAssets> build_assets(const RunConfig & config, const std::filesystem::path & base)
{
  auto a = std::make_shared<RunAssets>();
  a->vessel = load_vessel(config.vessel, base);
  a->plant = link::PlantAssets::build(a->vessel.database, a->vessel.layout, a->vessel.drag, config.vessel.scale,
                                      config.scenario.step);
  return a;
}

}  // namespace dpsim::harness
