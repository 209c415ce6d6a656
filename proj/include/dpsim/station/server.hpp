#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "dpsim/link/channel.hpp"
#include "dpsim/station/station.hpp"

namespace dpsim::station
{

struct ServerOptions
{
  /// How long POST /command waits for the control loop to apply a command.
  std::chrono::milliseconds ack_timeout{10000};
  /// Idle wait between telemetry polls on a WebSocket.
  std::chrono::milliseconds poll{50};
};

/// HTTP + WebSocket front of a Supervisor:
///   GET  /state      phase, mode, latest frame
///   GET  /params     manifest and current values
///   POST /command    CommandEnvelope JSON -> CommandAck JSON
///   GET  /telemetry  WebSocket upgrade; one TelemetryFrame JSON per text message
/// One thread per connection; stop() closes every socket.
class StationServer
{
public:
  /// Binds immediately (port 0 picks a free port).
  StationServer(std::shared_ptr<Supervisor> supervisor, const link::Endpoint & at, ServerOptions options = {});
  ~StationServer();
  StationServer(const StationServer &) = delete;
  StationServer & operator=(const StationServer &) = delete;

  [[nodiscard]] int port() const { return port_; }
  void stop();

  /// HTTP status of a rejected command.
  [[nodiscard]] static int status_for(const CommandAck & ack);

private:
  struct Impl;
  void accept_loop();
  void serve(std::shared_ptr<void> socket);

  std::shared_ptr<Supervisor> supervisor_;
  ServerOptions options_;
  std::unique_ptr<Impl> impl_;
  int port_{0};
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mutex_;
  std::vector<std::thread> workers_;
};

}  // namespace dpsim::station
