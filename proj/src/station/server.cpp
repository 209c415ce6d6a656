#include "dpsim/station/server.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

namespace dpsim::station
{

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

struct StationServer::Impl
{
  net::io_context io;
  tcp::acceptor acceptor{io};
  std::mutex mutex;
  std::set<std::shared_ptr<tcp::socket>> sockets;
};

namespace
{

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response reply(const Request & req, http::status status, const std::string & body,
               const std::string & type = "application/json")
{
  Response res{status, req.version()};
  res.set(http::field::server, "dpsim-station");
  res.set(http::field::content_type, type);
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = body;
  res.prepare_payload();
  return res;
}

json error_body(const std::string & error, const std::string & reason)
{
  return {{"type", "ack"}, {"ok", false}, {"error", error}, {"reason", reason}};
}

}  // namespace

StationServer::StationServer(std::shared_ptr<Supervisor> supervisor, const link::Endpoint & at, ServerOptions options)
: supervisor_(std::move(supervisor)), options_(options), impl_(std::make_unique<Impl>())
{
  if (!supervisor_) {
    throw std::invalid_argument("station server needs a supervisor");
  }
  beast::error_code ec;
  const auto address = net::ip::make_address(at.host, ec);
  if (ec) {
    throw std::invalid_argument(fmt::format("bad listen address '{}': {}", at.host, ec.message()));
  }
  const tcp::endpoint ep{address, static_cast<unsigned short>(at.port)};
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep, ec);
  if (ec) {
    throw link::ConnectionClosed(fmt::format("cannot bind {}: {}", at.str(), ec.message()));
  }
  impl_->acceptor.listen();
  port_ = impl_->acceptor.local_endpoint().port();
  acceptor_ = std::thread([this] { accept_loop(); });
}

StationServer::~StationServer() { stop(); }

void StationServer::stop()
{
  if (stopping_.exchange(true)) {
    return;
  }
  if (acceptor_.joinable()) {
    acceptor_.join();
  }
  {
    std::lock_guard lock(impl_->mutex);
    for (const auto & s : impl_->sockets) {
      ::shutdown(s->native_handle(), SHUT_RDWR);
    }
  }
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    workers.swap(workers_);
  }
  for (auto & w : workers) {
    w.join();
  }
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

void StationServer::accept_loop()
{
  const int fd = impl_->acceptor.native_handle();
  while (!stopping_) {
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) {
      continue;
    }
    auto socket = std::make_shared<tcp::socket>(impl_->io);
    beast::error_code ec;
    impl_->acceptor.accept(*socket, ec);
    if (ec) {
      continue;
    }
    {
      std::lock_guard lock(impl_->mutex);
      impl_->sockets.insert(socket);
    }
    std::lock_guard lock(mutex_);
    workers_.emplace_back([this, socket] { serve(socket); });
  }
}

int StationServer::status_for(const CommandAck & ack)
{
  if (ack.ok) {
    return 200;
  }
  if (ack.error == "UnknownParam") {
    return 404;
  }
  if (ack.error == "WrongPhase") {
    return 409;
  }
  if (ack.error == "Busy") {
    return 503;
  }
  return 400;
}

void StationServer::serve(std::shared_ptr<void> handle)
{
  auto socket = std::static_pointer_cast<tcp::socket>(handle);
  auto forget = [&] {
    std::lock_guard lock(impl_->mutex);
    impl_->sockets.erase(socket);
  };
  beast::flat_buffer buffer;
  try {
    for (;;) {
      Request req;
      beast::error_code ec;
      http::read(*socket, buffer, req, ec);
      if (ec) {
        break;
      }
      const std::string target(req.target());
      if (target == "/telemetry" && websocket::is_upgrade(req)) {
        websocket::stream<tcp::socket &> ws(*socket);
        ws.set_option(websocket::stream_base::decorator(
          [](websocket::response_type & res) { res.set(http::field::server, "dpsim-station"); }));
        ws.accept(req);
        ws.text(true);
        auto sub = supervisor_->subscribe();
        // The client only ever sends control frames; a close (or anything
        // unreadable) ends the subscription.
        auto peer_gone = [&] {
          pollfd p{socket->native_handle(), POLLIN, 0};
          if (::poll(&p, 1, 0) <= 0) {
            return false;
          }
          beast::flat_buffer in;
          beast::error_code rec;
          ws.read(in, rec);
          return static_cast<bool>(rec);
        };
        while (!stopping_) {
          if (peer_gone()) {
            break;
          }
          if (auto f = sub->next(options_.poll)) {
            ws.write(net::buffer(f->to_json().dump()));
            continue;
          }
          if (sub->closed() && sub->pending() == 0) {
            ws.close(sub->dropped() ? websocket::close_reason(websocket::close_code::policy_error, "slow subscriber")
                                    : websocket::close_reason(websocket::close_code::normal, "session ended"));
            break;
          }
        }
        sub->close();
        break;
      }

      Response res;
      if (req.method() == http::verb::options) {
        res = reply(req, http::status::no_content, "");
        res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res.set(http::field::access_control_allow_headers, "Content-Type");
      } else if (target == "/state" || target == "/params" || target == "/log") {
        if (req.method() != http::verb::get) {
          res = reply(req, http::status::method_not_allowed, error_body("MethodNotAllowed", "use GET").dump());
        } else if (target == "/state") {
          res = reply(req, http::status::ok, supervisor_->state_json().dump());
        } else if (target == "/params") {
          res = reply(req, http::status::ok, supervisor_->params_json().dump());
        } else {
          res = reply(req, http::status::ok, supervisor_->log_csv(), "text/csv");
        }
      } else if (target == "/command") {
        if (req.method() != http::verb::post) {
          res = reply(req, http::status::method_not_allowed, error_body("MethodNotAllowed", "use POST").dump());
        } else {
          try {
            auto cmd = CommandEnvelope::from_json(json::parse(req.body()));
            auto fut = supervisor_->submit(std::move(cmd));
            if (fut.wait_for(options_.ack_timeout) != std::future_status::ready) {
              res = reply(req, http::status::gateway_timeout,
                          error_body("Timeout", "control loop did not apply the command in time").dump());
            } else {
              const CommandAck ack = fut.get();
              res = reply(req, static_cast<http::status>(status_for(ack)), ack.to_json().dump());
            }
          } catch (const json::exception & e) {
            res = reply(req, http::status::bad_request, error_body("InvalidCommand", e.what()).dump());
          } catch (const InvalidCommand & e) {
            res = reply(req, http::status::bad_request, error_body("InvalidCommand", e.what()).dump());
          }
        }
      } else {
        res = reply(req, http::status::not_found, error_body("NotFound", target).dump());
      }
      http::write(*socket, res, ec);
      if (ec || !res.keep_alive()) {
        break;
      }
    }
  } catch (const std::exception &) {
    // Peer went away mid-frame; nothing to report to the control loop.
  }
  beast::error_code ec;
  socket->shutdown(tcp::socket::shutdown_both, ec);
  forget();
}

}  // namespace dpsim::station
