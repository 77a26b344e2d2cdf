#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "grapecm/cluster_manager.hpp"
#include "grapecm/expected.hpp"
#include "grapecm/wire.hpp"

namespace grapecm {

// Uniform node-side view of the CM: send a message, optionally get the
// reply. Queries and hellos are request/response; metrics and results are
// fire-and-forget.
class CmChannel {
 public:
  virtual ~CmChannel() = default;
  virtual std::optional<Message> exchange(const Message& m) = 0;
};

// Direct call into the CM. Deterministic; the only transport the report
// reproducibility contract covers.
class InProcessChannel : public CmChannel {
 public:
  explicit InProcessChannel(ClusterManager& cm) : cm_(cm) {}
  std::optional<Message> exchange(const Message& m) override {
    return cm_.handle_message(m);
  }

 private:
  ClusterManager& cm_;
};

// Newline-delimited JSON over a localhost TCP socket. The server thread
// serializes all CM mutations behind one mutex, honoring the CM's ordered
// command stream; per-connection responses preserve request order.
class CmTcpServer {
 public:
  // Binds 127.0.0.1:port (0 picks an ephemeral port) and serves until
  // stop(). Fails if the socket cannot be bound.
  static Expected<std::unique_ptr<CmTcpServer>> start(ClusterManager& cm, int port);

  ~CmTcpServer();
  int port() const { return port_; }
  void stop();

 private:
  CmTcpServer(ClusterManager& cm, int listen_fd, int port);
  void serve();
  void handle_connection(int fd);

  ClusterManager& cm_;
  std::mutex cm_mutex_;
  int listen_fd_;
  int port_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::vector<std::thread> handlers_;
  std::mutex handlers_mutex_;
};

class TcpChannel : public CmChannel {
 public:
  static Expected<std::unique_ptr<TcpChannel>> connect(const std::string& host, int port);
  ~TcpChannel() override;

  std::optional<Message> exchange(const Message& m) override;

 private:
  explicit TcpChannel(int fd) : fd_(fd) {}
  bool send_line(const std::string& line);
  std::optional<std::string> read_line();

  int fd_;
  std::string buffer_;
};

}  // namespace grapecm
