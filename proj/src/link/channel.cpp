#include "dpsim/link/channel.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>

#include <fmt/format.h>

namespace dpsim::link
{

namespace
{

// One direction of an in-process pipe.
struct Queue
{
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> items;
  bool closed{false};
};

class MemoryChannel final : public Channel
{
public:
  MemoryChannel(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~MemoryChannel() override { close(); }

  void send_payload(const std::string & payload) override
  {
    if (payload.size() > kMaxFrameBytes) {
      throw ProtocolViolation(fmt::format("frame of {} bytes exceeds the limit", payload.size()));
    }
    std::lock_guard lock(out_->mutex);
    if (out_->closed) {
      throw ConnectionClosed("peer closed the in-process channel");
    }
    out_->items.push_back(payload);
    out_->cv.notify_one();
  }

  std::string receive_payload(Millis timeout) override
  {
    std::unique_lock lock(in_->mutex);
    if (!in_->cv.wait_for(lock, timeout, [&] { return !in_->items.empty() || in_->closed; })) {
      throw Timeout(fmt::format("no message within {} ms", timeout.count()));
    }
    if (in_->items.empty()) {
      throw ConnectionClosed("peer closed the in-process channel");
    }
    std::string p = std::move(in_->items.front());
    in_->items.pop_front();
    return p;
  }

  void close() override
  {
    for (const auto & q : {in_, out_}) {
      std::lock_guard lock(q->mutex);
      q->closed = true;
      q->cv.notify_all();
    }
  }

private:
  std::shared_ptr<Queue> in_, out_;
};

std::string errno_text() { return std::strerror(errno); }

int remaining_ms(std::chrono::steady_clock::time_point deadline)
{
  const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now()).count();
  return static_cast<int>(std::max<long long>(0, left));
}

sockaddr_in resolve(const Endpoint & at)
{
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo * res = nullptr;
  if (const int rc = ::getaddrinfo(at.host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr) {
    throw ConnectionClosed(fmt::format("cannot resolve {}: {}", at.host, ::gai_strerror(rc)));
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in *>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(static_cast<std::uint16_t>(at.port));
  return addr;
}

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> memory_pair()
{
  auto a = std::make_shared<Queue>();
  auto b = std::make_shared<Queue>();
  return {std::make_unique<MemoryChannel>(a, b), std::make_unique<MemoryChannel>(b, a)};
}

Endpoint Endpoint::parse(const std::string & text)
{
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument(fmt::format("endpoint '{}' is not host:port", text));
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  char * end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) {
    throw std::invalid_argument(fmt::format("endpoint '{}' has an invalid port", text));
  }
  e.port = static_cast<int>(p);
  return e;
}

Endpoint Endpoint::from_env(const Endpoint & fallback, const char * variable)
{
  const char * v = std::getenv(variable);
  return (v != nullptr && *v != '\0') ? parse(v) : fallback;
}

std::string Endpoint::str() const { return fmt::format("{}:{}", host, port); }

TcpChannel::TcpChannel(int fd) : fd_(fd)
{
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpChannel::~TcpChannel() { close(); }

std::unique_ptr<TcpChannel> TcpChannel::connect(const Endpoint & at, Millis timeout)
{
  const sockaddr_in addr = resolve(at);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  // Retry refused connections until the deadline so a plant may start late.
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) {
      throw ConnectionClosed("socket(): " + errno_text());
    }
    if (::connect(fd, reinterpret_cast<const sockaddr *>(&addr), sizeof addr) == 0) {
      return std::make_unique<TcpChannel>(fd);
    }
    const std::string why = errno_text();
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Timeout(fmt::format("cannot connect to {} within {} ms ({})", at.str(), timeout.count(), why));
    }
    std::this_thread::sleep_for(Millis(20));
  }
}

void TcpChannel::send_payload(const std::string & payload)
{
  const std::string bytes = frame(payload);
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw ConnectionClosed("send(): " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
}

void TcpChannel::read_exact(unsigned char * out, std::size_t n, std::chrono::steady_clock::time_point deadline)
{
  std::size_t got = 0;
  while (got < n) {
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw ConnectionClosed("poll(): " + errno_text());
    }
    if (rc == 0) {
      throw Timeout("no complete frame before the deadline");
    }
    const ssize_t r = ::recv(fd_, out + got, n - got, 0);
    if (r == 0) {
      throw ConnectionClosed("peer closed the connection");
    }
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) {
        continue;
      }
      throw ConnectionClosed("recv(): " + errno_text());
    }
    got += static_cast<std::size_t>(r);
  }
}

std::string TcpChannel::receive_payload(Millis timeout)
{
  if (fd_ < 0) {
    throw ConnectionClosed("channel is closed");
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  unsigned char header[4];
  read_exact(header, 4, deadline);
  const std::size_t n = frame_length(header);
  std::string payload(n, '\0');
  read_exact(reinterpret_cast<unsigned char *>(payload.data()), n, deadline);
  return payload;
}

void TcpChannel::close()
{
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

TcpListener::TcpListener(const Endpoint & at)
{
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) {
    throw ConnectionClosed("socket(): " + errno_text());
  }
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(at);
  if (::bind(fd_, reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
    const std::string why = errno_text();
    ::close(fd_);
    throw ConnectionClosed(fmt::format("cannot listen on {}: {}", at.str(), why));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr *>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<TcpChannel> TcpListener::accept(Millis timeout)
{
  pollfd p{fd_, POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc == 0) {
    throw Timeout(fmt::format("no connection within {} ms", timeout.count()));
  }
  if (rc < 0) {
    throw ConnectionClosed("poll(): " + errno_text());
  }
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) {
    throw ConnectionClosed("accept(): " + errno_text());
  }
  return std::make_unique<TcpChannel>(fd);
}

void TcpListener::close()
{
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Transcript::add(Direction d, const std::string & payload)
{
  std::lock_guard lock(mutex_);
  entries_.push_back({d, frame(payload)});
}

std::vector<TranscriptEntry> Transcript::entries() const
{
  std::lock_guard lock(mutex_);
  return entries_;
}

std::string Transcript::hex_dump() const
{
  std::string out =
    "# dpsim lockstep conformance vector, protocol version " + std::to_string(kProtocolVersion) + "\n"
    "# one frame per line: direction (P>C plant to controller, C>P controller to plant), then the frame\n"
    "# bytes (4-byte big-endian length + UTF-8 JSON payload) in lowercase hex\n";
  for (const auto & e : entries()) {
    out += e.direction == Direction::plant_to_controller ? "P>C " : "C>P ";
    for (const char c : e.frame) {
      out += fmt::format("{:02x}", static_cast<unsigned char>(c));
    }
    out += '\n';
  }
  return out;
}

RecordingChannel::RecordingChannel(std::unique_ptr<Channel> inner, std::shared_ptr<Transcript> transcript,
                                   Direction outgoing)
: inner_(std::move(inner)), transcript_(std::move(transcript)), outgoing_(outgoing)
{
}

void RecordingChannel::send_payload(const std::string & payload)
{
  // Logged before the peer can see it, so the transcript order is causal.
  transcript_->add(outgoing_, payload);
  inner_->send_payload(payload);
}

std::string RecordingChannel::receive_payload(Millis timeout) { return inner_->receive_payload(timeout); }

void RecordingChannel::close() { inner_->close(); }

}  // namespace dpsim::link
