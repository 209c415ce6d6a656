#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "dpsim/common.hpp"

namespace dpsim::link
{

DPSIM_DEFINE_ERROR(ProtocolViolation);
DPSIM_DEFINE_ERROR(Timeout);
DPSIM_DEFINE_ERROR(ConnectionClosed);

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 1u << 20;

enum class MessageKind
{
  hello,
  state,
  cmd,
  param,
  ack,
  bye,
};

[[nodiscard]] std::string to_string(MessageKind k);

/// Both peers send one; they must agree on version and thruster count. The
/// plant's copy is authoritative for lambda, gamma and h (h is full scale).
struct Hello
{
  double t{0.0};
  int version{kProtocolVersion};
  std::string role;  // "plant" or "controller"
  double lambda{1.0};
  double gamma{1.0};
  int m{0};
  double h{0.5};
};

/// Full-scale pose (NED, ZYX Euler) and body velocity at t.
struct State
{
  double t{0.0};
  std::uint64_t step{0};
  Vector6 eta{Vector6::Zero()};
  Vector6 nu{Vector6::Zero()};
};

/// Full-scale thrusts (kN) and angles (rad) answering the STATE at t.
struct Cmd
{
  double t{0.0};
  Eigen::VectorXd u;
  Eigen::VectorXd alpha;
};

/// Plant-side setting, answered by an ACK.
struct Param
{
  double t{0.0};
  std::string name;
  double value{0.0};
};

struct Ack
{
  double t{0.0};
  std::string ref;
  bool ok{true};
  std::string error;
};

struct Bye
{
  double t{0.0};
  std::string reason;
};

using Message = std::variant<Hello, State, Cmd, Param, Ack, Bye>;

[[nodiscard]] MessageKind kind_of(const Message & m);
[[nodiscard]] double time_of(const Message & m);

/// Compact UTF-8 JSON with sorted keys and shortest round-trip numbers, so
/// decode(encode(m)) == m bit for bit.
[[nodiscard]] std::string encode(const Message & m);

/// Throws ProtocolViolation on malformed JSON, an unknown kind, missing or
/// mistyped fields, or non-finite numbers.
[[nodiscard]] Message decode(const std::string & payload);

/// 4-byte big-endian length followed by the payload.
[[nodiscard]] std::string frame(const std::string & payload);

/// Length from a 4-byte big-endian header; throws ProtocolViolation above
/// kMaxFrameBytes.
[[nodiscard]] std::size_t frame_length(const unsigned char header[4]);

}  // namespace dpsim::link
