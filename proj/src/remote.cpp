#include "ilcdpd/remote.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <iostream>

#include "ilcdpd/error.hpp"

namespace ilcdpd {

namespace {

std::string errno_text(int err) { return std::strerror(err); }

void set_timeouts(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error(ErrorKind::Config, "endpoint must be host:port, got '" + text + "'");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  try {
    std::size_t used = 0;
    const unsigned long port = std::stoul(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port > 65535) throw std::out_of_range("");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Config, "bad port in endpoint '" + text + "'");
  }
  return ep;
}

std::string Endpoint::to_string() const {
  return host + ":" + std::to_string(port);
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown_write() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

Socket Socket::connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res);
      rc != 0) {
    throw Error(ErrorKind::Connection, "cannot resolve " + ep.to_string() +
                                           ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res,
                                                             &::freeaddrinfo);
  std::string last_error = "no addresses";
  bool timed_out = false;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC,
                      ai->ai_protocol));
    if (!s.valid()) {
      last_error = errno_text(errno);
      continue;
    }
    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(s.fd(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{s.fd(), POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc == 0) {
        timed_out = true;
        last_error = "connect timed out";
        continue;
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
      if (rc < 0 || err != 0) {
        last_error = errno_text(rc < 0 ? errno : err);
        continue;
      }
    } else if (rc != 0) {
      last_error = errno_text(errno);
      continue;
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    set_timeouts(s.fd(), timeout);
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
  }
  throw Error(timed_out ? ErrorKind::Timeout : ErrorKind::Connection,
              "cannot connect to " + ep.to_string() + ": " + last_error);
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent,
                             MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        throw Error(ErrorKind::Timeout, "send timed out");
      }
      throw Error(ErrorKind::Connection, "send failed: " + errno_text(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::recv_all(std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw Error(ErrorKind::Protocol, "connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        throw Error(ErrorKind::Timeout, "receive timed out");
      }
      throw Error(ErrorKind::Connection, "receive failed: " + errno_text(errno));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

PlantServer::PlantServer(std::shared_ptr<Plant> plant, ServerOptions options)
    : plant_(std::move(plant)), options_(std::move(options)) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(options_.bind.port);
  if (int rc = ::getaddrinfo(options_.bind.host.c_str(), port.c_str(), &hints,
                             &res);
      rc != 0) {
    throw Error(ErrorKind::Connection, "cannot resolve " +
                                           options_.bind.to_string() + ": " +
                                           ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res,
                                                             &::freeaddrinfo);
  Socket s(::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC,
                    res->ai_protocol));
  if (!s.valid()) {
    throw Error(ErrorKind::Connection, "socket: " + errno_text(errno));
  }
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(s.fd(), 64) != 0) {
    throw Error(ErrorKind::Connection, "cannot bind " +
                                           options_.bind.to_string() + ": " +
                                           errno_text(errno));
  }
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6
                    ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                    : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  listener_ = std::move(s);
  acceptor_ = std::thread([this] { accept_loop(); });
}

PlantServer::~PlantServer() { stop(); }

void PlantServer::stop() {
  if (stopping_.exchange(true)) {
    if (acceptor_.joinable()) acceptor_.join();
    return;
  }
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(mutex_);
    for (auto& c : connections_) {
      if (c.socket.valid()) ::shutdown(c.socket.fd(), SHUT_RDWR);
    }
  }
  reap(true);
  listener_.close();
  stopping_.notify_all();
}

void PlantServer::wait() { stopping_.wait(false); }

void PlantServer::reap(bool all) {
  std::list<Connection> finished;
  {
    std::lock_guard lock(mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (all || it->done.load()) {
        auto next = std::next(it);
        finished.splice(finished.end(), connections_, it);
        it = next;
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) {
    if (c.thread.joinable()) c.thread.join();
  }
}

void PlantServer::accept_loop() {
  while (!stopping_.load()) {
    pollfd pfd{listener_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    reap(false);
    if (rc <= 0) continue;
    const int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(mutex_);
    auto& conn = connections_.emplace_back();
    conn.socket = Socket(fd);
    conn.thread = std::thread([this, &conn] {
      try {
        serve(conn);
      } catch (const std::exception& e) {
        if (!stopping_.load()) {
          std::cerr << "plant server: connection dropped: " << e.what() << "\n";
        }
      }
      {
        std::lock_guard done_lock(mutex_);
        conn.socket.close();
      }
      conn.done.store(true);
    });
  }
}

void PlantServer::serve(Connection& conn) {
  Socket& sock = conn.socket;
  std::array<std::uint8_t, wire::kHeaderSize> raw{};
  std::vector<std::uint8_t> payload;
  while (!stopping_.load() && sock.recv_all(raw)) {
    const auto header = wire::decode_header(raw);
    auto problem = wire::validate_request(header, options_.max_count);
    if (problem == wire::ErrorCode::BadCommand ||
        problem == wire::ErrorCode::Oversized) {
      // Framing is intact; drop the payload so the stream stays aligned.
      std::size_t left = 16 * static_cast<std::size_t>(header.count);
      std::array<std::uint8_t, 4096> sink{};
      while (left > 0) {
        const std::size_t chunk = std::min(left, sink.size());
        if (!sock.recv_all(std::span(sink.data(), chunk))) return;
        left -= chunk;
      }
    }
    if (problem) {
      sock.send_all(wire::encode_error(*problem));
      continue;
    }
    payload.resize(16 * static_cast<std::size_t>(header.count));
    if (!payload.empty() && !sock.recv_all(payload)) return;
    auto samples = wire::decode_samples(payload);
    std::vector<std::uint8_t> reply;
    if (samples.empty()) {
      reply = wire::encode_apply(wire::Command::ApplyResponse, samples);
    } else {
      try {
        const Signal u(std::move(samples), 1.0);
        const Signal y = plant_->apply(u);
        reply = wire::encode_apply(wire::Command::ApplyResponse, y.samples());
      } catch (const Error& e) {
        reply = wire::encode_error(e.kind() == ErrorKind::InvalidInput
                                       ? wire::ErrorCode::BadPayload
                                       : wire::ErrorCode::PlantFailure);
      } catch (const std::exception&) {
        reply = wire::encode_error(wire::ErrorCode::PlantFailure);
      }
    }
    sock.send_all(reply);
    served_.fetch_add(1);
  }
}

RemotePlant::RemotePlant(Endpoint endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

Signal RemotePlant::apply(const Signal& input) {
  std::lock_guard lock(mutex_);
  try {
    if (!socket_.valid()) socket_ = Socket::connect(endpoint_, timeout_);
    socket_.send_all(
        wire::encode_apply(wire::Command::ApplyRequest, input.samples()));
    std::array<std::uint8_t, wire::kHeaderSize> raw{};
    if (!socket_.recv_all(raw)) {
      throw Error(ErrorKind::Connection, "server closed the connection");
    }
    const auto h = wire::decode_header(raw);
    if (h.magic != wire::kMagic || h.version != wire::kVersion) {
      throw Error(ErrorKind::Protocol, "malformed response header");
    }
    if (h.command == static_cast<std::uint8_t>(wire::Command::Error)) {
      std::array<std::uint8_t, 4> code{};
      if (!socket_.recv_all(code)) {
        throw Error(ErrorKind::Protocol, "truncated error frame");
      }
      const auto c = wire::get_u32(code.data());
      // The server keeps the connection usable after an ERROR reply.
      throw RemoteError(c, "plant server replied " +
                               std::string(wire::error_name(c)) + " (code " +
                               std::to_string(c) + ")");
    }
    if (h.command != static_cast<std::uint8_t>(wire::Command::ApplyResponse)) {
      throw Error(ErrorKind::Protocol, "unexpected response command " +
                                           std::to_string(h.command));
    }
    if (h.count != input.size()) {
      throw Error(ErrorKind::Protocol,
                  "response carries " + std::to_string(h.count) +
                      " samples, expected " + std::to_string(input.size()));
    }
    std::vector<std::uint8_t> payload(16 * static_cast<std::size_t>(h.count));
    if (!socket_.recv_all(payload)) {
      throw Error(ErrorKind::Protocol, "response payload missing");
    }
    return input.with_samples(wire::decode_samples(payload));
  } catch (const RemoteError&) {
    throw;
  } catch (...) {
    socket_.close();
    throw;
  }
}

}  // namespace ilcdpd
