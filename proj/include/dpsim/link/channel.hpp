#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "dpsim/link/wire.hpp"

namespace dpsim::link
{

using Millis = std::chrono::milliseconds;
inline constexpr Millis kDefaultTimeout{5000};

struct SessionSummary
{
  std::uint64_t steps{0};
  double final_t{0.0};
  std::string reason;  // BYE reason (ours or the peer's)
};

/// A reliable, ordered, framed byte pipe between two peers.
class Channel
{
public:
  virtual ~Channel() = default;

  /// Sends one payload as a length-prefixed frame.
  virtual void send_payload(const std::string & payload) = 0;

  /// Blocks for the next payload. Throws Timeout after `timeout` (wall
  /// time) and ConnectionClosed when the peer has gone away.
  [[nodiscard]] virtual std::string receive_payload(Millis timeout) = 0;

  virtual void close() = 0;

  void send(const Message & m) { send_payload(encode(m)); }
  [[nodiscard]] Message receive(Millis timeout = kDefaultTimeout) { return decode(receive_payload(timeout)); }
};

/// Two connected in-process endpoints (thread-safe, unbounded queues).
[[nodiscard]] std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> memory_pair();

/// host:port; DPSIM_PLANT_ENDPOINT overrides the default.
struct Endpoint
{
  std::string host{"127.0.0.1"};
  int port{0};

  /// Throws std::invalid_argument unless the text is "host:port" with a
  /// port in [0, 65535].
  [[nodiscard]] static Endpoint parse(const std::string & text);
  [[nodiscard]] static Endpoint from_env(const Endpoint & fallback, const char * variable = "DPSIM_PLANT_ENDPOINT");
  [[nodiscard]] std::string str() const;
};

class TcpChannel final : public Channel
{
public:
  explicit TcpChannel(int fd);
  ~TcpChannel() override;
  TcpChannel(const TcpChannel &) = delete;
  TcpChannel & operator=(const TcpChannel &) = delete;

  /// Throws ConnectionClosed if the endpoint refuses, Timeout if it does not
  /// answer in time.
  [[nodiscard]] static std::unique_ptr<TcpChannel> connect(const Endpoint & at, Millis timeout = kDefaultTimeout);

  void send_payload(const std::string & payload) override;
  [[nodiscard]] std::string receive_payload(Millis timeout) override;
  void close() override;

private:
  void read_exact(unsigned char * out, std::size_t n, std::chrono::steady_clock::time_point deadline);
  int fd_;
};

class TcpListener
{
public:
  /// Port 0 picks a free port; see port().
  explicit TcpListener(const Endpoint & at);
  ~TcpListener();
  TcpListener(const TcpListener &) = delete;
  TcpListener & operator=(const TcpListener &) = delete;

  [[nodiscard]] int port() const { return port_; }

  /// Throws Timeout if nobody connects in time.
  [[nodiscard]] std::unique_ptr<TcpChannel> accept(Millis timeout = kDefaultTimeout);
  void close();

private:
  int fd_;
  int port_{0};
};

/// Wire direction seen from a transcript.
enum class Direction
{
  plant_to_controller,
  controller_to_plant,
};

struct TranscriptEntry
{
  Direction direction;
  std::string frame;  // header + payload, exactly as on the wire
};

/// Ordered record of frames shared by the two sides of a session.
class Transcript
{
public:
  void add(Direction d, const std::string & payload);
  [[nodiscard]] std::vector<TranscriptEntry> entries() const;

  /// One line per frame: "P>C <hex>" or "C>P <hex>", after a comment header.
  [[nodiscard]] std::string hex_dump() const;

private:
  mutable std::mutex mutex_;
  std::vector<TranscriptEntry> entries_;
};

/// Forwards to `inner` and logs every outgoing payload in `transcript`
/// with the given direction.
class RecordingChannel final : public Channel
{
public:
  RecordingChannel(std::unique_ptr<Channel> inner, std::shared_ptr<Transcript> transcript, Direction outgoing);

  void send_payload(const std::string & payload) override;
  [[nodiscard]] std::string receive_payload(Millis timeout) override;
  void close() override;

private:
  std::unique_ptr<Channel> inner_;
  std::shared_ptr<Transcript> transcript_;
  Direction outgoing_;
};

}  // namespace dpsim::link
