#include <doctest.h>

#include <atomic>
#include <chrono>
#include <numbers>
#include <random>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "dpsim/station/server.hpp"
#include "dpsim/station/session.hpp"

using namespace dpsim;
using namespace dpsim::station;
using nlohmann::json;
using namespace std::chrono_literals;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace
{

const std::shared_ptr<const harness::RunAssets> & assets()
{
  static const auto a = harness::build_assets(harness::RunConfig::defaults(harness::ScenarioKind::position_keeping));
  return a;
}

harness::RunConfig config(double duration)
{
  auto c = harness::RunConfig::defaults(harness::ScenarioKind::position_keeping);
  c.scenario.environment = env::position_keeping_environment(std::numbers::pi / 4.0);
  c.scenario.duration = duration;
  c.scenario.settle = 0.0;
  c.scenario.wave_components = 20;
  return c;
}

std::shared_ptr<Supervisor> supervisor(const harness::RunConfig & c, SupervisorOptions o = {})
{
  o.environment = c.scenario.environment;
  return std::make_shared<Supervisor>(c.make_registry(), o);
}

CommandEnvelope cmd(CommandKind kind, json payload = json::object(), std::string id = "c")
{
  CommandEnvelope e;
  e.id = std::move(id);
  e.kind = kind;
  e.payload = std::move(payload);
  return e;
}

CommandEnvelope set_param(const std::string & name, double value)
{
  return cmd(CommandKind::set_param, {{"name", name}, {"value", value}}, name);
}

using AfterStep = std::function<void(const link::StepTrace &, link::ControlStack &)>;

/// Runs the config under the supervisor with an extra tap after each
/// published step (on the loop thread, so submissions land on the next step).
harness::RunResult run_with(Supervisor & sup, const harness::RunConfig & c, AfterStep tap = {},
                            std::function<void(const link::State &)> before = {})
{
  harness::RunOptions o;
  o.registry = sup.registry();
  o.scripted = sup.mode() == Mode::scripted;
  o.hooks = sup.hooks();
  if (tap) {
    o.hooks.after_step = [inner = o.hooks.after_step, tap](const link::StepTrace & tr, link::ControlStack & st) {
      inner(tr, st);
      tap(tr, st);
    };
  }
  if (before) {
    o.hooks.before_step = [inner = o.hooks.before_step, before](const link::State & s, link::ControlStack & st) {
      auto out = inner(s, st);
      before(s);
      return out;
    };
  }
  auto r = harness::run_scenario(c, assets(), o);
  sup.finish();
  return r;
}

std::vector<TelemetryFrame> drain(Subscription & sub)
{
  std::vector<TelemetryFrame> out;
  while (auto f = sub.next(0ms)) {
    out.push_back(std::move(*f));
  }
  return out;
}

struct HttpReply
{
  int status{0};
  std::string body;
  std::string content_type;
};

HttpReply http_call(int port, http::verb verb, const std::string & target, const std::string & body = {})
{
  net::io_context io;
  tcp::socket sock(io);
  sock.connect({net::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port)});
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
  }
  req.body() = body;
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body(), std::string(res[http::field::content_type])};
}

HttpReply post_command(int port, const json & j) { return http_call(port, http::verb::post, "/command", j.dump()); }

class WsClient
{
public:
  /// A small receive buffer makes the server side back up sooner.
  explicit WsClient(int port, int receive_buffer = 0) : ws_(io_)
  {
    auto & sock = ws_.next_layer();
    sock.open(tcp::v4());
    if (receive_buffer > 0) {
      sock.set_option(net::socket_base::receive_buffer_size(receive_buffer));
    }
    sock.connect({net::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port)});
    ws_.handshake("127.0.0.1", "/telemetry");
  }

  /// Next frame; nullopt once the server closed the stream.
  std::optional<TelemetryFrame> read()
  {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws_.read(buf, ec);
    if (ec) {
      return std::nullopt;
    }
    return TelemetryFrame::from_json(json::parse(beast::buffers_to_string(buf.data())));
  }

  [[nodiscard]] websocket::close_reason reason() const { return ws_.reason(); }

  void close()
  {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

private:
  net::io_context io_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_CASE("telemetry frames round trip through JSON")
{
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1e5, 1e5);
  TelemetryFrame f;
  f.step = 1234567;
  f.t = 617.5;
  f.eta = Vector6::NullaryExpr([&] { return d(rng); });
  f.nu = Vector6::NullaryExpr([&] { return d(rng) * 1e-7; });
  f.eta_d = {1.0 / 3.0, -0.0, 5e-324};
  f.setpoint = {40.0, 0.0, std::numbers::pi};
  f.tau = {d(rng), d(rng), d(rng)};
  f.u = Eigen::VectorXd::NullaryExpr(6, [&] { return d(rng); });
  f.alpha = Eigen::VectorXd::NullaryExpr(6, [&] { return d(rng) * 1e-5; });
  f.s = {1e-17, 0.0, -2.5};
  f.env = EnvSummary::of(env::position_keeping_environment(1.0, 42));
  f.param_version = 17;
  CHECK(TelemetryFrame::from_json(json::parse(f.to_json().dump())) == f);

  f.snapshot = true;
  f.params = {{"version", 17}, {"values", {{"pid.kp.x", 400.0}}}, {"slots", {{"allocator", "qp"}}}};
  const json j = json::parse(f.to_json().dump());
  CHECK(j["type"] == "telemetry");
  CHECK(j["snapshot"] == true);
  CHECK(TelemetryFrame::from_json(j) == f);

  json bad = f.to_json();
  bad["eta"] = json::array({1, 2});
  CHECK_THROWS_AS((void)TelemetryFrame::from_json(bad), InvalidCommand);
}

TEST_CASE("command envelopes are validated")
{
  CHECK_THROWS_AS((void)CommandEnvelope::from_json(json{{"id", "a"}}), InvalidCommand);
  CHECK_THROWS_AS((void)CommandEnvelope::from_json(json{{"id", "a"}, {"kind", "fly"}}), InvalidCommand);
  CHECK_THROWS_AS((void)CommandEnvelope::from_json(json{{"kind", "stop"}, {"payload", json::array()}}),
                  InvalidCommand);
  CHECK_THROWS_AS((void)CommandEnvelope::from_json(json::array()), InvalidCommand);
  const auto e = CommandEnvelope::from_json(json{{"id", "x1"}, {"kind", "set_param"},
                                                 {"payload", {{"name", "pid.kp.x"}, {"value", 400}}}});
  CHECK(e.kind == CommandKind::set_param);
  CHECK(CommandEnvelope::from_json(e.to_json()).to_json() == e.to_json());
  for (auto k : {CommandKind::set_setpoint, CommandKind::set_param, CommandKind::switch_algorithm, CommandKind::start,
                 CommandKind::stop}) {
    CHECK(parse_command_kind(to_string(k)) == k);
  }
}

TEST_CASE("a parameter change is acked with the step that first used it")
{
  const auto c = config(30.0);
  auto sup = supervisor(c);
  auto sub = sup->subscribe();
  const auto v0 = sup->registry()->version();
  std::future<CommandAck> ok, bad, unknown;
  run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 10) {
      ok = sup->submit(set_param("pid.kp.x", 400.0));
      bad = sup->submit(set_param("pid.kp.x", -5.0));
      unknown = sup->submit(set_param("pid.kp.q", 1.0));
    }
  });
  const CommandAck a = ok.get();
  CHECK(a.ok);
  REQUIRE(a.step.has_value());
  CHECK(*a.step == 11);
  CHECK(a.param_version == v0 + 1);
  CHECK(sup->registry()->snapshot()->get("pid.kp.x") == 400.0);

  const CommandAck b = bad.get();
  CHECK(!b.ok);
  CHECK(b.error == "InvalidValue");
  CHECK(StationServer::status_for(b) == 400);
  CHECK(b.param_version == v0 + 1);

  const CommandAck u = unknown.get();
  CHECK(!u.ok);
  CHECK(u.error == "UnknownParam");
  CHECK(StationServer::status_for(u) == 404);

  const auto frames = drain(*sub);
  REQUIRE(frames.size() == 60);
  CHECK(frames[10].param_version == v0);
  CHECK(frames[11].param_version == a.param_version);
  CHECK(frames.back().param_version == a.param_version);
}

TEST_CASE("scripted sessions refuse operator setpoints")
{
  const auto c = config(10.0);
  SupervisorOptions o;
  o.mode = Mode::scripted;
  auto sup = supervisor(c, o);
  std::future<CommandAck> f;
  run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 3) {
      f = sup->submit(cmd(CommandKind::set_setpoint, {{"x", 5.0}, {"y", 0.0}, {"psi", 0.0}}));
    }
  });
  const CommandAck a = f.get();
  CHECK(!a.ok);
  CHECK(a.error == "WrongPhase");
  CHECK(StationServer::status_for(a) == 409);
}

TEST_CASE("manual setpoints take effect on the acked step")
{
  const auto c = config(20.0);
  auto sup = supervisor(c);
  auto sub = sup->subscribe();
  std::future<CommandAck> f, bad;
  run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 5) {
      f = sup->submit(cmd(CommandKind::set_setpoint, {{"x", 5.0}, {"y", -3.0}, {"psi", 0.2}}));
      bad = sup->submit(cmd(CommandKind::set_setpoint, {{"x", 5.0}}));
    }
  });
  const CommandAck a = f.get();
  REQUIRE(a.ok);
  CHECK(*a.step == 6);
  CHECK(bad.get().error == "InvalidValue");
  const auto frames = drain(*sub);
  CHECK(frames[5].setpoint == Vector3::Zero());
  CHECK(frames[6].setpoint == Vector3(5.0, -3.0, 0.2));
  CHECK(frames.back().setpoint == Vector3(5.0, -3.0, 0.2));
}

TEST_CASE("start and stop follow the session phase")
{
  const auto c = config(10.0);
  SupervisorOptions o;
  o.wait_for_start = true;
  auto sup = supervisor(c, o);
  CHECK(sup->phase() == Phase::ready);
  CHECK(sup->state_json()["phase"] == "ready");
  const CommandAck early = sup->submit(set_param("pid.kp.x", 300.0)).get();
  CHECK(early.error == "WrongPhase");
  CHECK(!sup->wait_until_started(1ms));

  const CommandAck go = sup->submit(cmd(CommandKind::start)).get();
  CHECK(go.ok);
  CHECK(*go.step == 0);
  CHECK(sup->phase() == Phase::running);
  CHECK(sup->wait_until_started(1ms));
  CHECK(sup->submit(cmd(CommandKind::start)).get().error == "WrongPhase");

  run_with(*sup, c);
  CHECK(sup->phase() == Phase::stopped);
  CHECK(sup->submit(set_param("pid.kp.x", 300.0)).get().error == "WrongPhase");
  CHECK(sup->submit(cmd(CommandKind::stop)).get().error == "WrongPhase");
}

TEST_CASE("stop ends the session after the acked step")
{
  const auto c = config(100.0);
  auto sup = supervisor(c);
  auto sub = sup->subscribe();
  std::future<CommandAck> f, after;
  const auto r = run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 20) {
      f = sup->submit(cmd(CommandKind::stop));
      after = sup->submit(set_param("pid.kp.x", 300.0));
    }
  });
  const CommandAck a = f.get();
  CHECK(a.ok);
  CHECK(*a.step == 21);
  CHECK(after.get().error == "WrongPhase");
  CHECK(r.samples.size() == 21);
  CHECK(r.session.controller.reason == "stop");
  CHECK(r.session.plant.reason == "stop");
  CHECK(drain(*sub).size() == 21);
  CHECK(sub->closed());
  CHECK(!sub->dropped());
}

TEST_CASE("a full command queue answers Busy")
{
  const auto c = config(10.0);
  SupervisorOptions o;
  o.queue_capacity = 2;
  auto sup = supervisor(c, o);
  auto a = sup->submit(set_param("pid.kp.x", 300.0));
  auto b = sup->submit(set_param("pid.kp.x", 310.0));
  auto full = sup->submit(set_param("pid.kp.x", 320.0));
  REQUIRE(full.wait_for(0ms) == std::future_status::ready);
  const CommandAck busy = full.get();
  CHECK(busy.error == "Busy");
  CHECK(StationServer::status_for(busy) == 503);
  CHECK(a.wait_for(0ms) == std::future_status::timeout);
  sup->finish();
  CHECK(a.get().error == "WrongPhase");
  CHECK(b.get().error == "WrongPhase");
}

TEST_CASE("a slow subscriber is dropped without holding up the loop")
{
  const auto c = config(100.0);
  SupervisorOptions o;
  o.subscriber_buffer = 16;
  auto sup = supervisor(c, o);
  auto slow = sup->subscribe();
  auto fast = sup->subscribe();
  std::vector<TelemetryFrame> seen;
  const auto r = run_with(*sup, c, [&](const link::StepTrace &, link::ControlStack &) {
    for (auto & f : drain(*fast)) {
      seen.push_back(std::move(f));
    }
  });
  CHECK(r.samples.size() == 200);
  CHECK(slow->dropped());
  CHECK(slow->closed());
  CHECK(drain(*slow).size() == 16);
  CHECK(!fast->dropped());
  CHECK(seen.size() == 200);
}

TEST_CASE("subscribers see the same frames in step order")
{
  const auto c = config(50.0);
  auto sup = supervisor(c);
  auto a = sup->subscribe();
  auto b = sup->subscribe();
  CHECK(sup->subscriber_count() == 2);
  run_with(*sup, c);
  const auto fa = drain(*a), fb = drain(*b);
  REQUIRE(fa.size() == 100);
  REQUIRE(fb.size() == fa.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    CHECK(fa[i] == fb[i]);
    CHECK(fa[i].step == i);
    CHECK(fa[i].snapshot == (i == 0));
  }
  CHECK(fa[0].params["values"]["pid.kp.x"].is_number());
  CHECK(fa[0].env.wave_dir_deg == doctest::Approx(45.0));
  CHECK(sup->subscriber_count() == 0);
}

TEST_CASE("joining mid-run starts with a parameter snapshot")
{
  const auto c = config(50.0);
  auto sup = supervisor(c);
  std::shared_ptr<Subscription> late;
  std::future<CommandAck> f;
  run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 20) {
      f = sup->submit(set_param("pid.kp.x", 444.0));
    }
    if (tr.step == 50) {
      late = sup->subscribe();
    }
  });
  const auto frames = drain(*late);
  REQUIRE(frames.size() == 50);
  CHECK(frames[0].step == 50);
  CHECK(frames[0].snapshot);
  CHECK(frames[0].params["values"]["pid.kp.x"] == 444.0);
  CHECK(frames[0].params["frame_version"] == f.get().param_version);
  CHECK(!frames[1].snapshot);
  CHECK(frames[1].step == 51);
}

TEST_CASE("the command log records every outcome with its step")
{
  const auto c = config(20.0);
  auto sup = supervisor(c);
  std::vector<std::future<CommandAck>> fs;
  run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 4) {
      fs.push_back(sup->submit(set_param("pid.kp.y", 350.0)));
    }
    if (tr.step == 9) {
      fs.push_back(sup->submit(set_param("pid.kp.y", -1.0)));
      fs.push_back(sup->submit(cmd(CommandKind::switch_algorithm, {{"slot", "allocator"}, {"algorithm", "pseudoinverse"}})));
    }
  });
  std::vector<CommandAck> acks;
  for (auto & f : fs) {
    acks.push_back(f.get());
  }
  const auto log = sup->log();
  REQUIRE(log.size() == acks.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].step == *acks[i].step);
    CHECK(log[i].ok == acks[i].ok);
    CHECK(log[i].error == acks[i].error);
    CHECK(log[i].param_version == acks[i].param_version);
  }
  CHECK(log[0].step == 5);
  CHECK(log[1].step == 10);
  const std::string csv = sup->log_csv();
  CHECK(csv.rfind("step,t,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("10,5,") != std::string::npos);
}

TEST_CASE("batched parameter changes are all or nothing")
{
  const auto c = config(20.0);
  auto sup = supervisor(c);
  const auto kp = sup->registry()->snapshot()->get("pid.kp.x");
  const auto v0 = sup->registry()->version();
  std::future<CommandAck> bad, good;
  run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack &) {
    if (tr.step == 2) {
      bad = sup->submit(cmd(CommandKind::set_param, {{"values", {{"pid.kp.x", 500.0}, {"pid.kp.y", -1.0}}}}));
      good = sup->submit(cmd(CommandKind::set_param, {{"values", {{"pid.kp.x", 510.0}, {"pid.kp.y", 520.0}}}}));
    }
  });
  const CommandAck b = bad.get();
  CHECK(b.error == "InvalidValue");
  CHECK(b.param_version == v0);
  const CommandAck g = good.get();
  CHECK(g.ok);
  CHECK(g.param_version == v0 + 1);
  const auto snap = sup->registry()->snapshot();
  CHECK(kp != 510.0);
  CHECK(snap->get("pid.kp.x") == 510.0);
  CHECK(snap->get("pid.kp.y") == 520.0);
}

TEST_CASE("no step sees half of a concurrent batch")
{
  const auto c = config(300.0);
  auto sup = supervisor(c);
  std::atomic<bool> done{false};
  std::atomic<int> applied{0};
  std::thread writer([&] {
    for (int i = 0; !done; ++i) {
      const double v = 300.0 + (i % 200);
      auto f = sup->submit(cmd(CommandKind::set_param, {{"values", {{"pid.kp.x", v}, {"pid.kp.y", v}}}}));
      if (f.wait_for(2s) == std::future_status::ready && f.get().ok) {
        ++applied;
      } else {
        break;
      }
    }
  });
  std::size_t mismatched = 0;
  run_with(*sup, c, {}, [&](const link::State &) {
    const auto snap = sup->registry()->snapshot();
    if (snap->get("pid.kp.x") != snap->get("pid.kp.y")) {
      ++mismatched;
    }
  });
  done = true;
  writer.join();
  CHECK(applied > 0);
  CHECK(mismatched == 0);
}

TEST_CASE("switching the allocator follows the integrator reset policy")
{
  for (const double policy : {1.0, 0.0}) {
    CAPTURE(policy);
    auto c = config(20.0);
    c.params["ctrl.integral_reset_on_switch"] = policy;
    auto sup = supervisor(c);
    std::future<CommandAck> f, unknown;
    std::uint64_t pid_steps_after = 0;
    std::string slot_after;
    run_with(*sup, c, [&](const link::StepTrace & tr, link::ControlStack & st) {
      if (tr.step == 10) {
        f = sup->submit(cmd(CommandKind::switch_algorithm, {{"slot", "allocator"}, {"algorithm", "pseudoinverse"}}));
        unknown = sup->submit(cmd(CommandKind::switch_algorithm, {{"slot", "allocator"}, {"algorithm", "magic"}}));
      }
      if (tr.step == 11) {
        pid_steps_after = st.pid_state().steps;
      }
    });
    const CommandAck a = f.get();
    CHECK(a.ok);
    CHECK(*a.step == 11);
    CHECK(!unknown.get().ok);
    CHECK(sup->registry()->snapshot()->slot("allocator") == "pseudoinverse");
    CHECK(pid_steps_after == (policy == 1.0 ? 1u : 12u));
  }
}

TEST_CASE("plant parameters travel as PARAM and resolve on the plant ACK")
{
  for (const bool wire : {false, true}) {
    CAPTURE(wire);
    const auto c = config(10.0);
    auto sup = supervisor(c);
    std::future<CommandAck> ok, unknown, bad, mixed;
    harness::RunOptions o;
    o.wire = wire;
    o.registry = sup->registry();
    o.hooks = sup->hooks();
    o.hooks.after_step = [&, inner = o.hooks.after_step](const link::StepTrace & tr, link::ControlStack & st) {
      inner(tr, st);
      if (tr.step == 3) {
        ok = sup->submit(set_param("plant.thruster_lag", 2.0));
        unknown = sup->submit(set_param("plant.bogus", 1.0));
        bad = sup->submit(set_param("plant.thruster_lag", -1.0));
        mixed = sup->submit(cmd(CommandKind::set_param, {{"values", {{"plant.thruster_lag", 1.0}, {"pid.kp.x", 300.0}}}}));
      }
    };
    const auto v0 = sup->registry()->version();
    (void)harness::run_scenario(c, assets(), o);
    sup->finish();
    const CommandAck a = ok.get();
    CHECK(a.ok);
    CHECK(*a.step == 4);
    CHECK(a.param_version == v0);
    CHECK(unknown.get().error == "UnknownParam");
    CHECK(bad.get().error == "InvalidValue");
    CHECK(mixed.get().error == "InvalidValue");
    CHECK(sup->registry()->snapshot()->get("pid.kp.x") != 300.0);
  }
}

TEST_CASE("an unobserved session spends under one percent in the service hooks")
{
  const auto c = config(1800.0);
  auto sup = supervisor(c);
  auto base = sup->hooks();
  using clock = std::chrono::steady_clock;
  clock::duration inside{};
  harness::RunOptions o;
  o.registry = sup->registry();
  o.record = false;
  o.hooks = base;
  o.hooks.before_step = [&](const link::State & s, link::ControlStack & st) {
    const auto t0 = clock::now();
    auto out = base.before_step(s, st);
    inside += clock::now() - t0;
    return out;
  };
  o.hooks.after_step = [&](const link::StepTrace & tr, link::ControlStack & st) {
    const auto t0 = clock::now();
    base.after_step(tr, st);
    inside += clock::now() - t0;
  };
  const auto t0 = clock::now();
  (void)harness::run_scenario(c, assets(), o);
  const double total = std::chrono::duration<double>(clock::now() - t0).count();
  sup->finish();
  const double share = std::chrono::duration<double>(inside).count() / total;
  MESSAGE("hook share of wall time: " << share * 100.0 << " %");
  CHECK(share < 0.01);
}

TEST_CASE("HTTP and WebSocket endpoints serve a live session")
{
  const auto c = config(3600.0);
  SupervisorOptions so;
  so.wait_for_start = true;
  auto sup = supervisor(c, so);
  StationServer server(sup, {"127.0.0.1", 0});
  const int port = server.port();
  REQUIRE(port > 0);

  std::exception_ptr failure;
  std::optional<harness::RunResult> result;
  std::thread loop([&] {
    try {
      SupervisedOptions opt;
      opt.pace = 200.0;
      result = run_supervised(c, assets(), *sup, opt);
    } catch (...) {
      failure = std::current_exception();
    }
  });

  const auto params = http_call(port, http::verb::get, "/params");
  CHECK(params.status == 200);
  CHECK(params.content_type == "application/json");
  const json pj = json::parse(params.body);
  CHECK(pj["current"]["values"].contains("pid.kp.x"));
  CHECK(pj["manifest"].dump().find("pid.kp.x") != std::string::npos);

  CHECK(json::parse(http_call(port, http::verb::get, "/state").body)["phase"] == "ready");
  WsClient ws(port);

  auto early = post_command(port, {{"id", "e"}, {"kind", "set_param"}, {"payload", {{"name", "pid.kp.x"}, {"value", 400}}}});
  CHECK(early.status == 409);
  CHECK(json::parse(early.body)["error"] == "WrongPhase");

  CHECK(post_command(port, {{"id", "go"}, {"kind", "start"}}).status == 200);

  auto first = ws.read();
  REQUIRE(first);
  CHECK(first->snapshot);
  CHECK(first->step == 0);
  CHECK(first->params["values"].contains("pid.kp.x"));

  const auto set = post_command(port, {{"id", "k"}, {"kind", "set_param"}, {"payload", {{"name", "pid.kp.x"}, {"value", 400}}}});
  REQUIRE(set.status == 200);
  const CommandAck ack = CommandAck::from_json(json::parse(set.body));
  CHECK(ack.ok);
  REQUIRE(ack.step.has_value());

  std::uint64_t last = first->step;
  bool saw_new_version = false;
  while (auto f = ws.read()) {
    CHECK(f->step == last + 1);
    last = f->step;
    if (f->step >= *ack.step) {
      CHECK(f->param_version >= ack.param_version);
      saw_new_version = true;
      break;
    }
  }
  CHECK(saw_new_version);

  const auto neg = post_command(port, {{"id", "n"}, {"kind", "set_param"}, {"payload", {{"name", "pid.kp.x"}, {"value", -5}}}});
  CHECK(neg.status == 400);
  CHECK(json::parse(neg.body)["error"] == "InvalidValue");
  const auto unk = post_command(port, {{"id", "u"}, {"kind", "set_param"}, {"payload", {{"name", "pid.kp.q"}, {"value", 1}}}});
  CHECK(unk.status == 404);
  CHECK(json::parse(unk.body)["error"] == "UnknownParam");
  const auto junk = http_call(port, http::verb::post, "/command", "{not json");
  CHECK(junk.status == 400);
  CHECK(json::parse(junk.body)["error"] == "InvalidCommand");
  CHECK(http_call(port, http::verb::get, "/nowhere").status == 404);
  CHECK(http_call(port, http::verb::get, "/command").status == 405);
  CHECK(http_call(port, http::verb::options, "/command").status == 204);

  const json state = json::parse(http_call(port, http::verb::get, "/state").body);
  CHECK(state["phase"] == "running");
  CHECK(state["latest"]["type"] == "telemetry");

  // Reconnecting gets a fresh snapshot with the current values.
  ws.close();
  WsClient again(port);
  auto snap = again.read();
  REQUIRE(snap);
  CHECK(snap->snapshot);
  CHECK(snap->params["values"]["pid.kp.x"] == 400.0);
  CHECK(snap->step > *ack.step);

  CHECK(post_command(port, {{"id", "s"}, {"kind", "stop"}}).status == 200);
  while (again.read()) {
  }
  CHECK(again.reason().code == websocket::close_code::normal);

  loop.join();
  if (failure) {
    std::rethrow_exception(failure);
  }
  REQUIRE(result);
  CHECK(result->session.controller.reason == "stop");
  CHECK(json::parse(http_call(port, http::verb::get, "/state").body)["phase"] == "stopped");
  const auto log = http_call(port, http::verb::get, "/log");
  CHECK(log.status == 200);
  CHECK(log.content_type == "text/csv");
  CHECK(log.body.find(",\"k\",set_param,1,") != std::string::npos);
  CHECK(log.body.find(",\"s\",stop,1,") != std::string::npos);
  server.stop();
}

TEST_CASE("a WebSocket reader that stops reading is closed as slow")
{
  const auto c = config(3600.0);
  SupervisorOptions so;
  so.subscriber_buffer = 8;
  so.wait_for_start = true;
  auto sup = supervisor(c, so);
  ServerOptions srv;
  srv.poll = 5ms;
  StationServer server(sup, {"127.0.0.1", 0}, srv);
  WsClient ws(server.port(), 4096);
  for (int i = 0; i < 400 && sup->subscriber_count() == 0; ++i) {
    std::this_thread::sleep_for(5ms);
  }
  REQUIRE(sup->subscriber_count() == 1);
  CHECK(sup->submit(cmd(CommandKind::start)).get().ok);
  // Nothing is read during the run: once the socket buffers are full the
  // server thread stalls and its queue overflows; the loop keeps going.
  const auto r = run_supervised(c, assets(), *sup);
  CHECK(r.samples.size() == 7200);
  std::size_t frames = 0;
  while (ws.read()) {
    ++frames;
  }
  CHECK(frames < 7200);
  CHECK(ws.reason().code == websocket::close_code::policy_error);
  CHECK(ws.reason().reason == "slow subscriber");
  server.stop();
}
