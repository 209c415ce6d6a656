#include "dpsim/link/wire.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace dpsim::link
{

namespace
{

using nlohmann::json;

json vec_json(const Eigen::VectorXd & v)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    a.push_back(v(i));
  }
  return a;
}

const json & field(const json & j, const char * name)
{
  const auto it = j.find(name);
  if (it == j.end()) {
    throw ProtocolViolation(fmt::format("missing field '{}'", name));
  }
  return *it;
}

double number(const json & j, const char * name)
{
  const json & v = field(j, name);
  if (!v.is_number()) {
    throw ProtocolViolation(fmt::format("field '{}' is not a number", name));
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw ProtocolViolation(fmt::format("field '{}' is not finite", name));
  }
  return d;
}

std::int64_t integer(const json & j, const char * name)
{
  const json & v = field(j, name);
  if (!v.is_number_integer()) {
    throw ProtocolViolation(fmt::format("field '{}' is not an integer", name));
  }
  return v.get<std::int64_t>();
}

std::string text(const json & j, const char * name)
{
  const json & v = field(j, name);
  if (!v.is_string()) {
    throw ProtocolViolation(fmt::format("field '{}' is not a string", name));
  }
  return v.get<std::string>();
}

Eigen::VectorXd vector(const json & j, const char * name, Eigen::Index expected = -1)
{
  const json & v = field(j, name);
  if (!v.is_array()) {
    throw ProtocolViolation(fmt::format("field '{}' is not an array", name));
  }
  if (expected >= 0 && static_cast<Eigen::Index>(v.size()) != expected) {
    throw ProtocolViolation(fmt::format("field '{}' has {} entries, expected {}", name, v.size(), expected));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
      throw ProtocolViolation(fmt::format("field '{}'[{}] is not a finite number", name, i));
    }
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

}  // namespace

std::string to_string(MessageKind k)
{
  switch (k) {
    case MessageKind::hello:
      return "HELLO";
    case MessageKind::state:
      return "STATE";
    case MessageKind::cmd:
      return "CMD";
    case MessageKind::param:
      return "PARAM";
    case MessageKind::ack:
      return "ACK";
    case MessageKind::bye:
      return "BYE";
  }
  return "?";
}

MessageKind kind_of(const Message & m) { return static_cast<MessageKind>(m.index()); }

double time_of(const Message & m)
{
  return std::visit([](const auto & v) { return v.t; }, m);
}

std::string encode(const Message & m)
{
  json j;
  j["kind"] = to_string(kind_of(m));
  j["t"] = time_of(m);
  std::visit(
    [&](const auto & v) {
      using T = std::decay_t<decltype(v)>;
      if constexpr (std::is_same_v<T, Hello>) {
        j["version"] = v.version;
        j["role"] = v.role;
        j["lambda"] = v.lambda;
        j["gamma"] = v.gamma;
        j["m"] = v.m;
        j["h"] = v.h;
      } else if constexpr (std::is_same_v<T, State>) {
        j["step"] = v.step;
        j["eta"] = vec_json(v.eta);
        j["nu"] = vec_json(v.nu);
      } else if constexpr (std::is_same_v<T, Cmd>) {
        j["u"] = vec_json(v.u);
        j["alpha"] = vec_json(v.alpha);
      } else if constexpr (std::is_same_v<T, Param>) {
        j["name"] = v.name;
        j["value"] = v.value;
      } else if constexpr (std::is_same_v<T, Ack>) {
        j["ref"] = v.ref;
        j["ok"] = v.ok;
        if (!v.ok) {
          j["error"] = v.error;
        }
      } else {
        j["reason"] = v.reason;
      }
    },
    m);
  return j.dump();
}

Message decode(const std::string & payload)
{
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::parse_error & e) {
    throw ProtocolViolation(fmt::format("malformed JSON: {}", e.what()));
  }
  if (!j.is_object()) {
    throw ProtocolViolation("message is not a JSON object");
  }
  const std::string kind = text(j, "kind");
  const double t = number(j, "t");
  if (kind == "HELLO") {
    Hello h;
    h.t = t;
    h.version = static_cast<int>(integer(j, "version"));
    h.role = text(j, "role");
    h.lambda = number(j, "lambda");
    h.gamma = number(j, "gamma");
    h.m = static_cast<int>(integer(j, "m"));
    h.h = number(j, "h");
    if (!(h.lambda > 0.0) || !(h.gamma > 0.0) || !(h.h > 0.0) || h.m < 1) {
      throw ProtocolViolation("HELLO needs lambda, gamma, h > 0 and m >= 1");
    }
    return h;
  }
  if (kind == "STATE") {
    State s;
    s.t = t;
    const auto step = integer(j, "step");
    if (step < 0) {
      throw ProtocolViolation("negative step index");
    }
    s.step = static_cast<std::uint64_t>(step);
    s.eta = vector(j, "eta", 6);
    s.nu = vector(j, "nu", 6);
    return s;
  }
  if (kind == "CMD") {
    Cmd c;
    c.t = t;
    c.u = vector(j, "u");
    c.alpha = vector(j, "alpha");
    if (c.u.size() != c.alpha.size()) {
      throw ProtocolViolation(fmt::format("CMD has {} thrusts but {} angles", c.u.size(), c.alpha.size()));
    }
    return c;
  }
  if (kind == "PARAM") {
    return Param{t, text(j, "name"), number(j, "value")};
  }
  if (kind == "ACK") {
    Ack a;
    a.t = t;
    a.ref = text(j, "ref");
    const json & ok = field(j, "ok");
    if (!ok.is_boolean()) {
      throw ProtocolViolation("field 'ok' is not a boolean");
    }
    a.ok = ok.get<bool>();
    if (!a.ok) {
      a.error = text(j, "error");
    }
    return a;
  }
  if (kind == "BYE") {
    return Bye{t, text(j, "reason")};
  }
  throw ProtocolViolation(fmt::format("unknown message kind '{}'", kind));
}

std::string frame(const std::string & payload)
{
  if (payload.size() > kMaxFrameBytes) {
    throw ProtocolViolation(fmt::format("frame of {} bytes exceeds the {} byte limit", payload.size(), kMaxFrameBytes));
  }
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(payload.size() + 4);
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += payload;
  return out;
}

std::size_t frame_length(const unsigned char header[4])
{
  const std::uint32_t n = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                          (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (n > kMaxFrameBytes) {
    throw ProtocolViolation(fmt::format("announced frame of {} bytes exceeds the {} byte limit", n, kMaxFrameBytes));
  }
  return n;
}

}  // namespace dpsim::link
