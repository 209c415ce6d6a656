#include "dpsim/control/params.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

namespace dpsim::control
{

namespace
{

constexpr std::array<const char *, 3> kAxes{"x", "y", "psi"};

void add_axes(std::vector<ParamSpec> & out, const std::string & prefix, const Vector3 & defaults, double min,
              double max, const std::array<const char *, 3> & units, const std::string & what)
{
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back({prefix + "." + kAxes[i], defaults(static_cast<int>(i)), min, max, false, units[i],
                   fmt::format("{} ({})", what, kAxes[i])});
  }
}

}  // namespace

ParamManifest::ParamManifest(std::vector<ParamSpec> params, std::vector<SlotSpec> slots)
: params_(std::move(params)), slots_(std::move(slots))
{
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto & p = params_[i];
    if (p.name.empty() || !(p.min <= p.max) || p.default_value < p.min || p.default_value > p.max) {
      throw ManifestError(fmt::format("parameter '{}' has inconsistent bounds or default", p.name));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (params_[j].name == p.name) {
        throw ManifestError(fmt::format("parameter '{}' declared twice", p.name));
      }
    }
  }
  for (const auto & s : slots_) {
    if (std::find(s.options.begin(), s.options.end(), s.default_value) == s.options.end()) {
      throw ManifestError(fmt::format("slot '{}' default '{}' is not one of its options", s.name, s.default_value));
    }
  }
}

ParamManifest ParamManifest::builtin()
{
  std::vector<ParamSpec> p;
  const PidGains pid = PidGains::shuttle_tanker();
  add_axes(p, "pid.kp", pid.kp, 0.0, 1e9, {"kN/m", "kN/m", "kN m/rad"}, "proportional gain");
  add_axes(p, "pid.ki", pid.ki, 0.0, 1e9, {"kN/(m s)", "kN/(m s)", "kN m/(rad s)"}, "integral gain");
  add_axes(p, "pid.kd", pid.kd, 0.0, 1e9, {"kN s/m", "kN s/m", "kN m s/rad"}, "derivative gain");
  add_axes(p, "ref.delta", Vector3::Ones(), 0.1, 10.0, {"-", "-", "-"}, "reference relative damping");
  add_axes(p, "ref.omega", Vector3(0.03, 0.03, 0.05), 1e-3, 2.0, {"rad/s", "rad/s", "rad/s"},
           "reference natural frequency");
  add_axes(p, "ref.vmax", Vector3::Zero(), 0.0, 100.0, {"m/s", "m/s", "rad/s"},
           "reference velocity limit, 0 = none");
  add_axes(p, "ref.amax", Vector3::Zero(), 0.0, 100.0, {"m/s^2", "m/s^2", "rad/s^2"},
           "reference acceleration limit, 0 = none");
  p.push_back({"alloc.rho", 1.0, 0.0, 1e9, false, "-", "singularity-avoidance weight"});
  p.push_back({"alloc.epsilon", 1e-3, 1e-9, 1e6, false, "-", "singularity-avoidance regulariser"});
  p.push_back({"alloc.omega", 10.0, 0.0, 1e9, false, "1/rad^2", "azimuth angle change weight"});
  add_axes(p, "alloc.q", Vector3::Constant(1e4), 0.0, 1e12, {"1/kN^2", "1/kN^2", "1/(kN m)^2"},
           "slack weight");
  p.push_back({"alloc.iterations", 3.0, 1.0, 100.0, true, "-", "convexification iterations per step"});
  p.push_back({"ctrl.lowpass_cutoff", 0.0, 0.0, 100.0, false, "rad/s", "measurement low-pass cutoff, 0 = off"});
  p.push_back({"ctrl.integral_limit_fraction", 0.5, 0.0, 1.0, false, "-",
               "integral term bound as a fraction of per-axis thrust capability"});
  p.push_back({"ctrl.integral_reset_on_switch", 1.0, 0.0, 1.0, true, "-",
               "reset the integrator when the controller slot changes"});

  std::vector<SlotSpec> s{
    {"filter", "third_order", {"third_order", "none"}},
    {"controller", "pid", {"pid"}},
    {"allocator", "qp", {"qp", "pseudoinverse"}},
  };
  return ParamManifest(std::move(p), std::move(s));
}

ParamManifest ParamManifest::from_json(const nlohmann::json & j)
{
  try {
    std::vector<ParamSpec> params;
    for (const auto & e : j.at("params")) {
      ParamSpec p;
      p.name = e.at("name").get<std::string>();
      p.default_value = e.at("default").get<double>();
      p.min = e.at("min").get<double>();
      p.max = e.at("max").get<double>();
      p.integer = e.value("integer", false);
      p.unit = e.value("unit", "");
      p.description = e.value("description", "");
      params.push_back(std::move(p));
    }
    std::vector<SlotSpec> slots;
    for (const auto & [name, e] : j.at("slots").items()) {
      slots.push_back({name, e.at("default").get<std::string>(), e.at("options").get<std::vector<std::string>>()});
    }
    return ParamManifest(std::move(params), std::move(slots));
  } catch (const nlohmann::json::exception & e) {
    throw ManifestError(fmt::format("malformed manifest: {}", e.what()));
  }
}

ParamManifest ParamManifest::load(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw ManifestError(fmt::format("cannot open {}", path.string()));
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception & e) {
    throw ManifestError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

nlohmann::json ParamManifest::to_json() const
{
  nlohmann::json params = nlohmann::json::array();
  for (const auto & p : params_) {
    params.push_back({{"name", p.name},
                      {"default", p.default_value},
                      {"min", p.min},
                      {"max", p.max},
                      {"integer", p.integer},
                      {"unit", p.unit},
                      {"description", p.description}});
  }
  nlohmann::json slots = nlohmann::json::object();
  for (const auto & s : slots_) {
    slots[s.name] = {{"default", s.default_value}, {"options", s.options}};
  }
  return {{"params", params}, {"slots", slots}};
}

const ParamSpec * ParamManifest::find(std::string_view name) const
{
  const auto it = std::find_if(params_.begin(), params_.end(), [&](const ParamSpec & p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const SlotSpec * ParamManifest::find_slot(std::string_view name) const
{
  const auto it = std::find_if(slots_.begin(), slots_.end(), [&](const SlotSpec & s) { return s.name == name; });
  return it == slots_.end() ? nullptr : &*it;
}

void ParamManifest::check(std::string_view name, double value) const
{
  const ParamSpec * p = find(name);
  if (p == nullptr) {
    throw UnknownParam(fmt::format("no parameter named '{}'", name));
  }
  if (!std::isfinite(value) || value < p->min || value > p->max) {
    throw InvalidValue(fmt::format("{} = {} outside [{}, {}]", name, value, p->min, p->max));
  }
  if (p->integer && value != std::round(value)) {
    throw InvalidValue(fmt::format("{} must be an integer, got {}", name, value));
  }
}

void ParamManifest::check_slot(std::string_view slot, std::string_view algorithm) const
{
  const SlotSpec * s = find_slot(slot);
  if (s == nullptr) {
    throw UnknownParam(fmt::format("no algorithm slot named '{}'", slot));
  }
  if (std::find(s->options.begin(), s->options.end(), algorithm) == s->options.end()) {
    throw InvalidValue(fmt::format("'{}' is not an option for slot '{}'", algorithm, slot));
  }
}

double ParamSnapshot::get(std::string_view name) const
{
  const auto it = values.find(name);
  if (it == values.end()) {
    throw UnknownParam(fmt::format("no parameter named '{}'", name));
  }
  return it->second;
}

const std::string & ParamSnapshot::slot(std::string_view name) const
{
  const auto it = slots.find(name);
  if (it == slots.end()) {
    throw UnknownParam(fmt::format("no algorithm slot named '{}'", name));
  }
  return it->second;
}

Vector3 ParamSnapshot::axes(std::string_view prefix) const
{
  Vector3 v;
  for (std::size_t i = 0; i < 3; ++i) {
    v(static_cast<int>(i)) = get(fmt::format("{}.{}", prefix, kAxes[i]));
  }
  return v;
}

PidGains ParamSnapshot::pid() const
{
  PidGains g;
  g.kp = axes("pid.kp");
  g.ki = axes("pid.ki");
  g.kd = axes("pid.kd");
  return g;
}

ReferenceGains ParamSnapshot::reference() const
{
  ReferenceGains g;
  g.delta = axes("ref.delta");
  g.omega = axes("ref.omega");
  const Vector3 vmax = axes("ref.vmax"), amax = axes("ref.amax");
  for (int i = 0; i < 3; ++i) {
    g.vmax(i) = vmax(i) > 0.0 ? vmax(i) : kUnlimited;
    g.amax(i) = amax(i) > 0.0 ? amax(i) : kUnlimited;
  }
  return g;
}

nlohmann::json ParamSnapshot::to_json() const
{
  nlohmann::json j;
  j["version"] = version;
  j["values"] = nlohmann::json::object();
  for (const auto & [k, v] : values) {
    j["values"][k] = v;
  }
  j["slots"] = nlohmann::json::object();
  for (const auto & [k, v] : slots) {
    j["slots"][k] = v;
  }
  return j;
}

ParamRegistry::ParamRegistry(ParamManifest manifest) : manifest_(std::move(manifest))
{
  auto s = std::make_shared<ParamSnapshot>();
  for (const auto & p : manifest_.params()) {
    s->values.emplace(p.name, p.default_value);
  }
  for (const auto & sl : manifest_.slots()) {
    s->slots.emplace(sl.name, sl.default_value);
  }
  current_ = std::move(s);
}

std::shared_ptr<const ParamSnapshot> ParamRegistry::snapshot() const
{
  std::lock_guard lock(mutex_);
  return current_;
}

std::uint64_t ParamRegistry::version() const { return snapshot()->version; }

std::uint64_t ParamRegistry::set(std::string_view name, double value)
{
  return set_many({{std::string(name), value}});
}

std::uint64_t ParamRegistry::set_many(const std::vector<std::pair<std::string, double>> & values)
{
  for (const auto & [name, value] : values) {
    manifest_.check(name, value);
  }
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<ParamSnapshot>(*current_);
  for (const auto & [name, value] : values) {
    next->values[name] = value;
  }
  next->version = current_->version + 1;
  current_ = std::move(next);
  return current_->version;
}

std::uint64_t ParamRegistry::bind(std::string_view slot, std::string_view algorithm)
{
  manifest_.check_slot(slot, algorithm);
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<ParamSnapshot>(*current_);
  next->slots[std::string(slot)] = std::string(algorithm);
  next->version = current_->version + 1;
  current_ = std::move(next);
  return current_->version;
}

}  // namespace dpsim::control
