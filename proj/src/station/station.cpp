#include "dpsim/station/station.hpp"

#include <fmt/format.h>

namespace dpsim::station
{

using nlohmann::json;

namespace
{

template <class V>
json array_of(const V & v)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    a.push_back(v(i));
  }
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_of(const json & j, const char * key)
{
  const json & a = j.at(key);
  if (!a.is_array() || a.size() != static_cast<std::size_t>(N)) {
    throw InvalidCommand(fmt::format("'{}' must be an array of {} numbers", key, N));
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    v(i) = a.at(static_cast<std::size_t>(i)).get<double>();
  }
  return v;
}

Eigen::VectorXd dynamic_of(const json & j, const char * key)
{
  const json & a = j.at(key);
  if (!a.is_array()) {
    throw InvalidCommand(fmt::format("'{}' must be an array", key));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  }
  return v;
}

double number(const json & payload, const char * key)
{
  if (!payload.contains(key) || !payload[key].is_number()) {
    throw control::InvalidValue(fmt::format("payload needs a numeric '{}'", key));
  }
  const double v = payload[key].get<double>();
  if (!std::isfinite(v)) {
    throw control::InvalidValue(fmt::format("'{}' must be finite", key));
  }
  return v;
}

std::string text(const json & payload, const char * key)
{
  if (!payload.contains(key) || !payload[key].is_string()) {
    throw control::InvalidValue(fmt::format("payload needs a string '{}'", key));
  }
  return payload[key].get<std::string>();
}

bool is_plant_param(const std::string & name) { return name.rfind("plant.", 0) == 0; }

CommandAck rejection(const CommandEnvelope & cmd, const std::string & error, const std::string & reason)
{
  CommandAck a;
  a.id = cmd.id;
  a.kind = cmd.kind;
  a.ok = false;
  a.error = error;
  a.reason = reason;
  return a;
}

std::future<CommandAck> ready_future(CommandAck a)
{
  std::promise<CommandAck> p;
  p.set_value(std::move(a));
  return p.get_future();
}

std::string csv_quote(const std::string & s)
{
  std::string out = "\"";
  for (char c : s) {
    out += c == '"' ? std::string("\"\"") : std::string(1, c);
  }
  return out + "\"";
}

}  // namespace

EnvSummary EnvSummary::of(const env::EnvironmentSpec & e)
{
  return {e.hs,         e.tp, rad2deg(e.wave_dir), e.wind_speed, rad2deg(e.wind_dir), e.current_speed,
          rad2deg(e.current_dir), e.seed};
}

json TelemetryFrame::to_json() const
{
  json j{{"type", "telemetry"},
         {"step", step},
         {"t", t},
         {"eta", array_of(eta)},
         {"nu", array_of(nu)},
         {"eta_d", array_of(eta_d)},
         {"setpoint", array_of(setpoint)},
         {"tau_pid", array_of(tau)},
         {"u", array_of(u)},
         {"alpha", array_of(alpha)},
         {"s", array_of(s)},
         {"env",
          {{"hs", env.hs},
           {"tp", env.tp},
           {"wave_dir_deg", env.wave_dir_deg},
           {"wind_speed", env.wind_speed},
           {"wind_dir_deg", env.wind_dir_deg},
           {"current_speed", env.current_speed},
           {"current_dir_deg", env.current_dir_deg},
           {"seed", env.seed}}},
         {"param_version", param_version},
         {"snapshot", snapshot}};
  if (snapshot) {
    j["params"] = params;
  }
  return j;
}

TelemetryFrame TelemetryFrame::from_json(const json & j)
{
  try {
    TelemetryFrame f;
    f.step = j.at("step").get<std::uint64_t>();
    f.t = j.at("t").get<double>();
    f.eta = fixed_of<6>(j, "eta");
    f.nu = fixed_of<6>(j, "nu");
    f.eta_d = fixed_of<3>(j, "eta_d");
    f.setpoint = fixed_of<3>(j, "setpoint");
    f.tau = fixed_of<3>(j, "tau_pid");
    f.u = dynamic_of(j, "u");
    f.alpha = dynamic_of(j, "alpha");
    f.s = fixed_of<3>(j, "s");
    const json & e = j.at("env");
    f.env = {e.at("hs").get<double>(),           e.at("tp").get<double>(),
             e.at("wave_dir_deg").get<double>(), e.at("wind_speed").get<double>(),
             e.at("wind_dir_deg").get<double>(), e.at("current_speed").get<double>(),
             e.at("current_dir_deg").get<double>(), e.at("seed").get<std::uint64_t>()};
    f.param_version = j.at("param_version").get<std::uint64_t>();
    f.snapshot = j.at("snapshot").get<bool>();
    if (f.snapshot) {
      f.params = j.at("params");
    }
    return f;
  } catch (const json::exception & e) {
    throw InvalidCommand(fmt::format("malformed telemetry frame: {}", e.what()));
  }
}

bool TelemetryFrame::operator==(const TelemetryFrame & o) const
{
  return step == o.step && t == o.t && eta == o.eta && nu == o.nu && eta_d == o.eta_d && setpoint == o.setpoint &&
         tau == o.tau && u.size() == o.u.size() && u == o.u && alpha.size() == o.alpha.size() && alpha == o.alpha &&
         s == o.s && env == o.env && param_version == o.param_version && snapshot == o.snapshot && params == o.params;
}

std::string to_string(CommandKind k)
{
  switch (k) {
    case CommandKind::set_setpoint:
      return "set_setpoint";
    case CommandKind::set_param:
      return "set_param";
    case CommandKind::switch_algorithm:
      return "switch_algorithm";
    case CommandKind::start:
      return "start";
    case CommandKind::stop:
      return "stop";
  }
  return "?";
}

CommandKind parse_command_kind(const std::string & s)
{
  for (auto k : {CommandKind::set_setpoint, CommandKind::set_param, CommandKind::switch_algorithm,
                 CommandKind::start, CommandKind::stop}) {
    if (to_string(k) == s) {
      return k;
    }
  }
  throw InvalidCommand(fmt::format("unknown command kind '{}'", s));
}

CommandEnvelope CommandEnvelope::from_json(const json & j)
{
  if (!j.is_object()) {
    throw InvalidCommand("command must be a JSON object");
  }
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw InvalidCommand("command needs a string 'kind'");
  }
  CommandEnvelope c;
  c.kind = parse_command_kind(j["kind"].get<std::string>());
  if (j.contains("id")) {
    if (!j["id"].is_string()) {
      throw InvalidCommand("'id' must be a string");
    }
    c.id = j["id"].get<std::string>();
  }
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) {
      throw InvalidCommand("'payload' must be an object");
    }
    c.payload = j["payload"];
  }
  return c;
}

json CommandEnvelope::to_json() const { return {{"id", id}, {"kind", to_string(kind)}, {"payload", payload}}; }

json CommandAck::to_json() const
{
  json j{{"type", "ack"}, {"id", id}, {"kind", to_string(kind)}, {"ok", ok}, {"param_version", param_version}};
  j["step"] = step ? json(*step) : json(nullptr);
  if (!ok) {
    j["error"] = error;
    j["reason"] = reason;
  }
  return j;
}

CommandAck CommandAck::from_json(const json & j)
{
  try {
    CommandAck a;
    a.id = j.at("id").get<std::string>();
    a.kind = parse_command_kind(j.at("kind").get<std::string>());
    a.ok = j.at("ok").get<bool>();
    a.param_version = j.at("param_version").get<std::uint64_t>();
    if (!j.at("step").is_null()) {
      a.step = j["step"].get<std::uint64_t>();
    }
    a.error = j.value("error", "");
    a.reason = j.value("reason", "");
    return a;
  } catch (const json::exception & e) {
    throw InvalidCommand(fmt::format("malformed ack: {}", e.what()));
  }
}

std::string to_string(Phase p)
{
  switch (p) {
    case Phase::ready:
      return "ready";
    case Phase::running:
      return "running";
    case Phase::stopped:
      return "stopped";
  }
  return "?";
}

std::string to_string(Mode m) { return m == Mode::manual ? "manual" : "scripted"; }

std::optional<TelemetryFrame> Subscription::next(std::chrono::milliseconds timeout)
{
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || closed_; });
  if (frames_.empty()) {
    return std::nullopt;
  }
  TelemetryFrame f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

bool Subscription::dropped() const
{
  std::lock_guard lock(mutex_);
  return dropped_;
}

bool Subscription::closed() const
{
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t Subscription::pending() const
{
  std::lock_guard lock(mutex_);
  return frames_.size();
}

void Subscription::close()
{
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

Supervisor::Supervisor(std::shared_ptr<control::ParamRegistry> registry, SupervisorOptions options)
: registry_(std::move(registry)),
  options_(std::move(options)),
  env_(EnvSummary::of(options_.environment)),
  phase_(options_.wait_for_start ? Phase::ready : Phase::running)
{
  if (!registry_) {
    throw std::invalid_argument("supervisor needs a parameter registry");
  }
  if (options_.queue_capacity == 0 || options_.subscriber_buffer == 0) {
    throw std::invalid_argument("queue capacity and subscriber buffer must be > 0");
  }
}

std::future<CommandAck> Supervisor::submit(CommandEnvelope cmd)
{
  std::unique_lock lock(mutex_);
  if (phase_ == Phase::stopped) {
    return ready_future(rejection(cmd, "WrongPhase", "session has stopped"));
  }
  if (cmd.kind == CommandKind::start) {
    if (phase_ != Phase::ready) {
      return ready_future(rejection(cmd, "WrongPhase", "session is already running"));
    }
    phase_ = Phase::running;
    CommandAck a;
    a.id = cmd.id;
    a.kind = cmd.kind;
    a.ok = true;
    a.step = 0;
    a.param_version = registry_->version();
    log_.push_back({0, 0.0, cmd.id, cmd.kind, true, {}, a.param_version, cmd.payload.dump()});
    lock.unlock();
    started_cv_.notify_all();
    return ready_future(a);
  }
  if (phase_ == Phase::ready) {
    return ready_future(rejection(cmd, "WrongPhase", "session not started"));
  }
  if (queue_.size() >= options_.queue_capacity) {
    return ready_future(rejection(cmd, "Busy", fmt::format("command queue full ({})", options_.queue_capacity)));
  }
  queue_.push_back({std::move(cmd), {}});
  return queue_.back().promise.get_future();
}

std::shared_ptr<Subscription> Supervisor::subscribe()
{
  auto sub = std::make_shared<Subscription>();
  std::lock_guard lock(mutex_);
  if (phase_ == Phase::stopped) {
    if (latest_) {
      sub->frames_.push_back(with_snapshot(*latest_));
    }
    sub->closed_ = true;
    return sub;
  }
  if (latest_) {
    sub->frames_.push_back(with_snapshot(*latest_));
  } else {
    sub->needs_snapshot_ = true;
  }
  subscribers_.push_back(sub);
  return sub;
}

TelemetryFrame Supervisor::with_snapshot(TelemetryFrame f) const
{
  auto snap = registry_->snapshot();
  f.snapshot = true;
  f.params = snap->to_json();
  // The frame was taken at its own version; report the set it ran with.
  f.params["frame_version"] = f.param_version;
  return f;
}

std::optional<TelemetryFrame> Supervisor::latest() const
{
  std::lock_guard lock(mutex_);
  return latest_;
}

Phase Supervisor::phase() const
{
  std::lock_guard lock(mutex_);
  return phase_;
}

std::size_t Supervisor::subscriber_count() const
{
  std::lock_guard lock(mutex_);
  return subscribers_.size();
}

bool Supervisor::wait_until_started(std::chrono::milliseconds timeout) const
{
  std::unique_lock lock(mutex_);
  return started_cv_.wait_for(lock, timeout, [&] { return phase_ != Phase::ready; });
}

json Supervisor::state_json() const
{
  std::lock_guard lock(mutex_);
  json j{{"phase", to_string(phase_)},
         {"mode", to_string(options_.mode)},
         {"param_version", registry_->version()},
         {"subscribers", subscribers_.size()},
         {"queued", queue_.size()}};
  j["latest"] = latest_ ? latest_->to_json() : json(nullptr);
  return j;
}

json Supervisor::params_json() const
{
  return {{"manifest", registry_->manifest().to_json()}, {"current", registry_->snapshot()->to_json()}};
}

std::vector<LogEntry> Supervisor::log() const
{
  std::lock_guard lock(mutex_);
  return log_;
}

std::string Supervisor::log_csv() const
{
  std::string out = "step,t,id,kind,ok,error,param_version,payload\n";
  for (const auto & e : log()) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", e.step, e.t, csv_quote(e.id), to_string(e.kind), e.ok ? 1 : 0,
                       e.error, e.param_version, csv_quote(e.payload));
  }
  return out;
}

void Supervisor::record(const CommandAck & ack, const CommandEnvelope & cmd, double t)
{
  std::lock_guard lock(mutex_);
  log_.push_back({ack.step.value_or(0), t, cmd.id, cmd.kind, ack.ok, ack.error, ack.param_version, cmd.payload.dump()});
}

harness::RunHooks Supervisor::hooks()
{
  harness::RunHooks h;
  h.before_step = [this](const link::State & s, link::ControlStack & stack) { return drain(s, stack); };
  h.after_step = [this](const link::StepTrace & tr, link::ControlStack &) { publish(tr); };
  h.on_ack = [this](const link::Param & p, const link::Ack & a) { on_ack(p, a); };
  h.stop = [this] { return stop_; };
  return h;
}

std::vector<link::Param> Supervisor::drain(const link::State & s, link::ControlStack & stack)
{
  t_ = s.t;
  step_ = s.step;
  std::deque<Pending> batch;
  {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) {
      return {};
    }
    batch.swap(queue_);
  }
  std::vector<link::Param> plant;
  for (auto & p : batch) {
    if (stop_) {
      CommandAck a = rejection(p.cmd, "WrongPhase", "session is stopping");
      a.step = s.step;
      a.param_version = registry_->version();
      record(a, p.cmd, s.t);
      p.promise.set_value(a);
      continue;
    }
    apply(p, s, stack, plant);
  }
  return plant;
}

void Supervisor::apply(Pending & p, const link::State & s, link::ControlStack & stack,
                       std::vector<link::Param> & plant)
{
  const CommandEnvelope & cmd = p.cmd;
  CommandAck a;
  a.id = cmd.id;
  a.kind = cmd.kind;
  a.step = s.step;
  try {
    switch (cmd.kind) {
      case CommandKind::set_setpoint: {
        if (options_.mode == Mode::scripted) {
          throw WrongPhase("scripted run: the setpoint follows the script");
        }
        const double x = number(cmd.payload, "x"), y = number(cmd.payload, "y"), psi = number(cmd.payload, "psi");
        stack.set_setpoint(control::Setpoint::make(x, y, psi));
        break;
      }
      case CommandKind::set_param: {
        std::vector<std::pair<std::string, double>> values;
        if (cmd.payload.contains("values")) {
          const json & v = cmd.payload["values"];
          if (!v.is_object() || v.empty()) {
            throw control::InvalidValue("'values' must be a non-empty object");
          }
          for (const auto & [k, val] : v.items()) {
            if (!val.is_number()) {
              throw control::InvalidValue(fmt::format("'{}' must be a number", k));
            }
            values.emplace_back(k, val.get<double>());
          }
        } else {
          values.emplace_back(text(cmd.payload, "name"), number(cmd.payload, "value"));
        }
        const bool to_plant = is_plant_param(values.front().first);
        for (const auto & [k, v] : values) {
          if (is_plant_param(k) != to_plant || (to_plant && values.size() > 1)) {
            throw control::InvalidValue("plant parameters are set one at a time, apart from controller ones");
          }
        }
        if (to_plant) {
          plant.push_back({s.t, values.front().first, values.front().second});
          awaiting_plant_.push_back(std::move(p));
          return;
        }
        registry_->set_many(values);
        break;
      }
      case CommandKind::switch_algorithm:
        registry_->bind(text(cmd.payload, "slot"), text(cmd.payload, "algorithm"));
        break;
      case CommandKind::start:
        throw WrongPhase("session is already running");
      case CommandKind::stop:
        stop_ = true;
        break;
    }
    a.ok = true;
  } catch (const Error & e) {
    a.ok = false;
    a.error = e.code();
    a.reason = e.what();
  } catch (const std::invalid_argument & e) {
    a.ok = false;
    a.error = "InvalidValue";
    a.reason = e.what();
  }
  a.param_version = registry_->version();
  record(a, cmd, s.t);
  p.promise.set_value(a);
}

void Supervisor::on_ack(const link::Param & param, const link::Ack & ack)
{
  if (awaiting_plant_.empty()) {
    return;
  }
  Pending p = std::move(awaiting_plant_.front());
  awaiting_plant_.pop_front();
  CommandAck a;
  a.id = p.cmd.id;
  a.kind = p.cmd.kind;
  a.ok = ack.ok;
  a.param_version = registry_->version();
  a.step = step_;
  if (!ack.ok) {
    a.error = ack.error.rfind("UnknownPlantParam", 0) == 0 ? "UnknownParam" : "InvalidValue";
    a.reason = ack.error;
  }
  (void)param;
  record(a, p.cmd, t_);
  p.promise.set_value(a);
}

void Supervisor::publish(const link::StepTrace & tr)
{
  TelemetryFrame f;
  f.step = tr.step;
  f.t = tr.t;
  f.eta = tr.eta;
  f.nu = tr.nu;
  f.eta_d = tr.reference.eta_d;
  f.setpoint = tr.setpoint.vec();
  f.tau = tr.tau;
  f.u = tr.allocation.u;
  f.alpha = tr.allocation.alpha;
  f.s = tr.allocation.s;
  f.env = env_;
  f.param_version = tr.param_version;

  std::lock_guard lock(mutex_);
  for (auto it = subscribers_.begin(); it != subscribers_.end();) {
    Subscription & sub = **it;
    bool drop = false;
    {
      std::lock_guard sl(sub.mutex_);
      if (sub.closed_) {
        drop = true;
      } else if (sub.frames_.size() >= options_.subscriber_buffer) {
        sub.dropped_ = true;
        sub.closed_ = true;
        drop = true;
      } else if (sub.needs_snapshot_) {
        sub.frames_.push_back(with_snapshot(f));
        sub.needs_snapshot_ = false;
      } else {
        sub.frames_.push_back(f);
      }
    }
    sub.cv_.notify_all();
    it = drop ? subscribers_.erase(it) : it + 1;
  }
  latest_ = std::move(f);
}

void Supervisor::finish()
{
  std::deque<Pending> rest;
  std::vector<std::shared_ptr<Subscription>> subs;
  {
    std::lock_guard lock(mutex_);
    phase_ = Phase::stopped;
    rest.swap(queue_);
    subs.swap(subscribers_);
  }
  started_cv_.notify_all();
  for (auto & p : rest) {
    p.promise.set_value(rejection(p.cmd, "WrongPhase", "session has stopped"));
  }
  for (auto & p : awaiting_plant_) {
    p.promise.set_value(rejection(p.cmd, "WrongPhase", "session has stopped"));
  }
  awaiting_plant_.clear();
  for (auto & s : subs) {
    s->close();
  }
}

}  // namespace dpsim::station
