#include "dpsim/link/controller.hpp"

#include <fmt/format.h>

namespace dpsim::link
{

ControlStack::ControlStack(alloc::ThrusterLayout layout, std::shared_ptr<control::ParamRegistry> registry)
: layout_(std::move(layout)), registry_(std::move(registry)), capability_(layout_.capability())
{
  if (!registry_) {
    throw std::invalid_argument("control stack needs a parameter registry");
  }
  u_prev_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
  alpha_prev_ = layout_.initial_angles();
}

void ControlStack::set_step(double h)
{
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw std::invalid_argument(fmt::format("control step must be > 0, got {}", h));
  }
  h_ = h;
}

Cmd ControlStack::step(const State & s)
{
  const auto snap = registry_->snapshot();
  if (params_ && snap->get("ctrl.integral_reset_on_switch") != 0.0 && snap->slots != params_->slots) {
    pid_.reset();
  }
  params_ = snap;

  const Vector3 eta_o(s.eta(0), s.eta(1), s.eta(5));
  const bool filtered = snap->slot("filter") == "third_order";
  if (!started_) {
    if (!setpoint_) {
      setpoint_ = control::Setpoint::make(eta_o(0), eta_o(1), eta_o(2));
    }
    ref_ = filtered ? control::ReferenceState{eta_o, Vector3::Zero(), Vector3::Zero()}
                    : control::ReferenceState::at(*setpoint_);
    started_ = true;
  } else {
    ref_ = filtered ? control::reference_step(ref_, *setpoint_, snap->reference(), h_)
                    : control::ReferenceState::at(*setpoint_);
  }

  control::PidOptions pid_opt;
  pid_opt.integral_limit = snap->get("ctrl.integral_limit_fraction") * capability_;
  pid_opt.lowpass_cutoff = snap->get("ctrl.lowpass_cutoff");
  const Vector3 tau = control::pid_step(eta_o, ref_, snap->pid(), h_, pid_, pid_opt);

  alloc::AllocationProblem problem;
  problem.tau = tau;
  problem.u0 = u_prev_;
  problem.alpha0 = alpha_prev_;
  problem.step = h_;
  problem.weights.q = snap->axes("alloc.q");
  problem.weights.omega_angle = snap->get("alloc.omega");
  problem.weights.rho = snap->get("alloc.rho");
  problem.weights.epsilon = snap->get("alloc.epsilon");
  problem.weights.iterations = static_cast<int>(snap->get("alloc.iterations"));
  const auto result = snap->slot("allocator") == "pseudoinverse" ? alloc::allocate_pseudoinverse(problem, layout_)
                                                                 : alloc::allocate(problem, layout_);
  u_prev_ = result.u;
  alpha_prev_ = result.alpha;

  last_ = StepTrace{s.t, s.step, s.eta, s.nu, *setpoint_, ref_, tau, result, snap->version};
  return Cmd{s.t, result.u, result.alpha};
}

SessionSummary run_controller(Channel & channel, ControlStack & stack, const ControllerOptions & options)
{
  SessionSummary summary;
  double t_last = -std::numeric_limits<double>::infinity();
  auto fail = [&](const std::string & why) {
    try {
      channel.send(Bye{std::isfinite(t_last) ? t_last : 0.0, why});
    } catch (const std::exception &) {
    }
    channel.close();
    throw ProtocolViolation(why);
  };

  const Message first = channel.receive(options.timeout);
  const auto * plant = std::get_if<Hello>(&first);
  if (plant == nullptr) {
    fail(fmt::format("expected HELLO, got {}", to_string(kind_of(first))));
  }
  if (plant->version != kProtocolVersion) {
    fail(fmt::format("protocol version {} not supported (controller speaks {})", plant->version, kProtocolVersion));
  }
  const auto m = static_cast<int>(stack.layout().size());
  if (plant->m != m) {
    fail(fmt::format("plant has {} thrusters, the controller drives {}", plant->m, m));
  }
  stack.set_step(plant->h);
  Hello reply = *plant;
  reply.role = "controller";
  channel.send(reply);

  std::optional<std::uint64_t> prev_step;
  for (;;) {
    const Message msg = channel.receive(options.timeout);
    if (const auto * b = std::get_if<Bye>(&msg)) {
      summary.final_t = b->t;
      summary.reason = b->reason;
      channel.close();
      return summary;
    }
    const auto * s = std::get_if<State>(&msg);
    if (s == nullptr) {
      fail(fmt::format("expected STATE, got {}", to_string(kind_of(msg))));
    }
    if (s->t < t_last) {
      fail(fmt::format("STATE time went back from {} to {}", t_last, s->t));
    }
    if (prev_step && s->step != *prev_step + 1) {
      fail(fmt::format("STATE step {} follows step {}", s->step, *prev_step));
    }
    t_last = s->t;
    prev_step = s->step;

    if (options.before_step) {
      for (const auto & p : options.before_step(*s)) {
        Param out = p;
        out.t = s->t;
        channel.send(out);
        const Message reply_msg = channel.receive(options.timeout);
        const auto * ack = std::get_if<Ack>(&reply_msg);
        if (ack == nullptr) {
          fail(fmt::format("expected ACK for PARAM {}, got {}", p.name, to_string(kind_of(reply_msg))));
        }
        if (options.on_ack) {
          options.on_ack(out, *ack);
        }
      }
    }
    if (options.stop && options.stop()) {
      channel.send(Bye{s->t, "stop"});
      channel.close();
      summary.final_t = s->t;
      summary.reason = "stop";
      return summary;
    }
    channel.send(stack.step(*s));
    ++summary.steps;
    if (options.after_step) {
      options.after_step(stack.last());
    }
  }
}

}  // namespace dpsim::link
