#pragma once

// TCP transport for plant measurements: a server that exposes a Plant through
// the ILCP wire protocol and a client that implements Plant over it.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ilcdpd/plant.hpp"
#include "ilcdpd/wire.hpp"

namespace ilcdpd {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; throws Error(Config) on malformed input.
  static Endpoint parse(const std::string& text);
  std::string to_string() const;
};

/// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  /// Connects with a timeout; send/receive use the same timeout afterwards.
  /// Throws Error(Connection) or Error(Timeout).
  static Socket connect(const Endpoint& ep, std::chrono::milliseconds timeout);

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() noexcept;
  void shutdown_write() noexcept;

  /// Throws Error(Connection) / Error(Timeout).
  void send_all(std::span<const std::uint8_t> bytes);
  /// Fills `out` completely. Returns false on orderly EOF before any byte;
  /// throws Error(Protocol) on EOF mid-buffer.
  bool recv_all(std::span<std::uint8_t> out);

 private:
  int fd_ = -1;
};

struct ServerOptions {
  Endpoint bind{"127.0.0.1", 0};  // port 0 picks an ephemeral port
  std::uint32_t max_count = wire::kDefaultMaxCount;
};

/// Serves APPLY requests against a shared plant. Each connection gets its own
/// thread and handles one request at a time; the plant must be thread-safe.
/// Malformed frames get an ERROR reply and the connection stays open.
class PlantServer {
 public:
  PlantServer(std::shared_ptr<Plant> plant, ServerOptions options = {});
  ~PlantServer();
  PlantServer(const PlantServer&) = delete;
  PlantServer& operator=(const PlantServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::uint64_t requests_served() const { return served_.load(); }

  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

 private:
  struct Connection {
    Socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Connection& conn);
  void reap(bool all);

  std::shared_ptr<Plant> plant_;
  ServerOptions options_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> served_{0};
  std::mutex mutex_;
  std::list<Connection> connections_;
  std::thread acceptor_;
};

/// Plant over the wire. Any failure drops the connection so the next call
/// starts from a clean one; no partial Signal is ever returned.
class RemotePlant : public Plant {
 public:
  explicit RemotePlant(Endpoint endpoint,
                       std::chrono::milliseconds timeout =
                           std::chrono::seconds(30));

  Signal apply(const Signal& input) override;

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
  Socket socket_;
  std::mutex mutex_;
};

}  // namespace ilcdpd
