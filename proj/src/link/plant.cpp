#include "dpsim/link/plant.hpp"

#include <thread>

#include <fmt/format.h>

namespace dpsim::link
{

namespace
{

using scaling::Kind;

Vector6 planar(const Vector3 & f)
{
  Vector6 out = Vector6::Zero();
  out(0) = f(0);
  out(1) = f(1);
  out(5) = f(2);
  return out;
}

Vector3 planar(const Vector6 & f) { return {f(0), f(1), f(5)}; }

void send_bye(Channel & channel, double t, const std::string & reason)
{
  try {
    channel.send(Bye{t, reason});
  } catch (const std::exception &) {
    // Peer already gone; the diagnostic still reaches the caller.
  }
}

}  // namespace

std::shared_ptr<const PlantAssets> PlantAssets::build(const hydro::HydroDatabase & full_db,
                                                      const alloc::ThrusterLayout & full_layout,
                                                      const env::WindCurrentModel & full_drag,
                                                      const scaling::ScaleSpec & scale, double h, double cutoff_time)
{
  scale.validate();
  if (!(h > 0.0) || !(cutoff_time > h)) {
    throw std::invalid_argument(fmt::format("plant needs 0 < h < cutoff, got h = {} s, cutoff = {} s", h, cutoff_time));
  }
  auto db = scale.is_identity() ? full_db : scaling::database_to_model(full_db, scale);
  const double hm = scaling::to_model_scale(h, Kind::time, scale);
  const double tcm = scaling::to_model_scale(cutoff_time, Kind::time, scale);
  auto model = hydro::VesselModel::build(db, tcm, hm);
  auto layout = scale.is_identity() ? full_layout
                                    : full_layout.scaled(scaling::factor(Kind::length, scale),
                                                         scaling::factor(Kind::force, scale),
                                                         scaling::factor(Kind::time, scale));
  auto drag = scale.is_identity() ? full_drag : scaling::drag_model_to_model(full_drag, scale);
  return std::make_shared<const PlantAssets>(
    PlantAssets{scale, h, std::move(db), std::move(model), std::move(layout), std::move(drag)});
}

Plant::Plant(std::shared_ptr<const PlantAssets> assets, PlantConfig config)
: assets_(std::move(assets)), config_(std::move(config))
{
  config_.environment.validate();
  if (!(config_.thruster_lag >= 0.0) || !config_.initial_pose.finite()) {
    throw std::invalid_argument("plant needs a non-negative thruster lag and a finite initial pose");
  }
  const auto & s = assets_->scale;
  env_model_ = scaling::environment_to_model(config_.environment, s);
  if (config_.environment.hs > 0.0) {
    waves_model_ = scaling::waves_to_model(env::realize_spectrum(config_.environment, config_.wave_components), s);
  }
  state_ = hydro::make_state(assets_->model, 0.0, hydro::Pose6::from(scaling::pose_to_model(config_.initial_pose.vec(), s)),
                             hydro::BodyVel6{});
  const auto m = static_cast<Eigen::Index>(assets_->layout.size());
  u_cmd_ = u_act_ = Eigen::VectorXd::Zero(m);
  alpha_cmd_ = alpha_act_ = assets_->layout.initial_angles();
}

Hello Plant::hello() const
{
  Hello h;
  h.t = state().t;
  h.role = "plant";
  h.lambda = assets_->scale.lambda;
  h.gamma = assets_->scale.gamma;
  h.m = static_cast<int>(assets_->layout.size());
  h.h = assets_->h;
  return h;
}

State Plant::state() const
{
  const auto & s = assets_->scale;
  State out;
  out.t = scaling::to_full_scale(state_.t, Kind::time, s);
  out.step = steps_;
  out.eta = scaling::pose_to_full(state_.eta.vec(), s);
  out.nu = scaling::velocity_to_full(state_.nu.vec(), s);
  return out;
}

void Plant::command(const Cmd & cmd)
{
  const auto & layout = assets_->layout;
  const auto m = static_cast<Eigen::Index>(layout.size());
  if (cmd.u.size() != m || cmd.alpha.size() != m) {
    throw ProtocolViolation(fmt::format("CMD carries {} thrusters, the plant has {}", cmd.u.size(), m));
  }
  const double force = scaling::factor(Kind::force, assets_->scale);
  const double slack = 1e-9;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto & t = layout[static_cast<std::size_t>(i)];
    const double u = cmd.u(i) / force;
    const double tol = slack * (1.0 + std::max(std::abs(t.u_min), std::abs(t.u_max)));
    if (u < t.u_min - tol || u > t.u_max + tol) {
      throw ProtocolViolation(fmt::format("thruster {} commanded {} kN, limits [{}, {}] kN", t.name, cmd.u(i),
                                          t.u_min * force, t.u_max * force));
    }
    if (cmd.alpha(i) < t.alpha_min - slack || cmd.alpha(i) > t.alpha_max + slack) {
      throw ProtocolViolation(fmt::format("thruster {} commanded {} rad outside its angle limits", t.name, cmd.alpha(i)));
    }
    u_cmd_(i) = std::clamp(u, t.u_min, t.u_max);
    alpha_cmd_(i) = t.fixed_angle() ? t.alpha_init : cmd.alpha(i);
  }
}

void Plant::step()
{
  const double hm = assets_->model_step();
  const double lag = scaling::to_model_scale(config_.thruster_lag, Kind::time, assets_->scale);
  const double a = lag > 0.0 ? -std::expm1(-hm / lag) : 1.0;
  for (Eigen::Index i = 0; i < u_act_.size(); ++i) {
    u_act_(i) += a * (u_cmd_(i) - u_act_(i));
    alpha_act_(i) = wrap_angle(alpha_act_(i) + a * wrap_angle(alpha_cmd_(i) - alpha_act_(i)));
  }
  f_thruster_ = planar(Vector3(alloc::build_config_matrix(alpha_act_, assets_->layout) * u_act_));
  f_environment_ = env::wind_current_force(env_model_, assets_->drag, state_.eta, state_.nu);
  if (!waves_model_.components.empty()) {
    f_environment_ += env::wave_force(waves_model_, assets_->database, state_.eta, state_.t);
  }
  state_ = hydro::step_dynamics(state_, assets_->model, f_thruster_, f_environment_, hm);
  ++steps_;
}

void Plant::set_param(const std::string & name, double value)
{
  if (name != "plant.thruster_lag") {
    throw UnknownPlantParam(fmt::format("unknown plant parameter '{}'", name));
  }
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument(fmt::format("plant.thruster_lag must be >= 0, got {}", value));
  }
  config_.thruster_lag = value;
}

Eigen::VectorXd Plant::actual_thrust() const { return u_act_ * scaling::factor(Kind::force, assets_->scale); }

Vector3 Plant::thruster_load() const { return planar(scaling::load_to_full(f_thruster_, assets_->scale)); }

Vector3 Plant::environment_load() const { return planar(scaling::load_to_full(f_environment_, assets_->scale)); }

SessionSummary serve_plant(Channel & channel, Plant & plant, const ServeOptions & options)
{
  SessionSummary summary;
  const Hello mine = plant.hello();
  auto fail = [&](const std::string & why) {
    send_bye(channel, plant.state().t, why);
    channel.close();
    throw ProtocolViolation(why);
  };
  try {
    channel.send(mine);
    const Message first = channel.receive(options.timeout);
    const auto * peer = std::get_if<Hello>(&first);
    if (peer == nullptr) {
      fail(fmt::format("expected HELLO, got {}", to_string(kind_of(first))));
    }
    if (peer->version != kProtocolVersion) {
      fail(fmt::format("protocol version {} not supported (plant speaks {})", peer->version, kProtocolVersion));
    }
    if (peer->m != mine.m) {
      fail(fmt::format("controller drives {} thrusters, the plant has {}", peer->m, mine.m));
    }

    while (plant.steps() < options.steps) {
      const State s = plant.state();
      channel.send(s);
      for (;;) {
        const Message msg = channel.receive(options.timeout);
        if (const auto * p = std::get_if<Param>(&msg)) {
          Ack ack{s.t, "PARAM " + p->name, true, {}};
          try {
            plant.set_param(p->name, p->value);
          } catch (const std::exception & e) {
            ack.ok = false;
            ack.error = e.what();
          }
          channel.send(ack);
          continue;
        }
        if (const auto * b = std::get_if<Bye>(&msg)) {
          summary.steps = plant.steps();
          summary.final_t = s.t;
          summary.reason = b->reason;
          channel.close();
          return summary;
        }
        const auto * c = std::get_if<Cmd>(&msg);
        if (c == nullptr) {
          fail(fmt::format("expected CMD for t = {}, got {}", s.t, to_string(kind_of(msg))));
        }
        if (c->t != s.t) {
          fail(fmt::format("CMD answers t = {} but the outstanding STATE is t = {}", c->t, s.t));
        }
        try {
          plant.command(*c);
        } catch (const ProtocolViolation & e) {
          fail(e.what());
        }
        break;
      }
      plant.step();
      if (options.on_step) {
        options.on_step(plant);
      }
    }
    summary.steps = plant.steps();
    summary.final_t = plant.state().t;
    summary.reason = "done";
    channel.send(Bye{summary.final_t, summary.reason});
    channel.close();
    return summary;
  } catch (const Timeout & e) {
    send_bye(channel, plant.state().t, std::string("timeout: ") + e.what());
    channel.close();
    throw;
  }
}

void serve_tcp(TcpListener & listener, const std::function<std::unique_ptr<Plant>()> & make_plant,
               const ServeOptions & options, std::size_t sessions,
               const std::function<void(std::size_t, const std::exception &)> & on_error)
{
  std::vector<std::thread> workers;
  std::mutex error_mutex;
  for (std::size_t k = 0; k < sessions; ++k) {
    std::shared_ptr<Channel> channel;
    try {
      channel = listener.accept(options.timeout);
    } catch (const std::exception & e) {
      if (on_error) {
        on_error(k, e);
      }
      break;
    }
    workers.emplace_back([&, k, channel] {
      try {
        auto plant = make_plant();
        (void)serve_plant(*channel, *plant, options);
      } catch (const std::exception & e) {
        if (on_error) {
          std::lock_guard lock(error_mutex);
          on_error(k, e);
        }
      }
    });
  }
  for (auto & w : workers) {
    w.join();
  }
}

}  // namespace dpsim::link
