#include "grapecm/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace grapecm {

namespace {

// Responses are expected for queries and hellos only.
bool expects_response(const Message& m) {
  return std::holds_alternative<PolicyQuery>(m) || std::holds_alternative<Hello>(m);
}

}  // namespace

Expected<std::unique_ptr<CmTcpServer>> CmTcpServer::start(ClusterManager& cm,
                                                          int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return make_error("socket() failed");
  int yes = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    return make_error("bind() failed on port " + std::to_string(port));
  }
  if (::listen(fd, 64) != 0) {
    ::close(fd);
    return make_error("listen() failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  int actual_port = ntohs(addr.sin_port);
  return std::unique_ptr<CmTcpServer>(new CmTcpServer(cm, fd, actual_port));
}

CmTcpServer::CmTcpServer(ClusterManager& cm, int listen_fd, int port)
    : cm_(cm), listen_fd_(listen_fd), port_(port) {
  acceptor_ = std::thread([this] { serve(); });
}

CmTcpServer::~CmTcpServer() { stop(); }

void CmTcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::lock_guard<std::mutex> lock(handlers_mutex_);
  for (auto& t : handlers_) {
    if (t.joinable()) t.join();
  }
}

void CmTcpServer::serve() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) break;
    std::lock_guard<std::mutex> lock(handlers_mutex_);
    handlers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void CmTcpServer::handle_connection(int fd) {
  std::string buffer;
  char chunk[4096];
  while (!stopping_) {
    ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      auto msg = decode(line);
      if (!msg.ok()) continue;  // malformed lines are dropped, not fatal

      std::optional<Message> response;
      {
        std::lock_guard<std::mutex> lock(cm_mutex_);
        response = cm_.handle_message(msg.value());
      }
      if (response && expects_response(msg.value())) {
        auto encoded = encode(*response);
        if (encoded.ok()) {
          const std::string& out = encoded.value();
          std::size_t sent = 0;
          while (sent < out.size()) {
            ssize_t w = ::send(fd, out.data() + sent, out.size() - sent, 0);
            if (w <= 0) break;
            sent += static_cast<std::size_t>(w);
          }
        }
      }
    }
  }
  ::close(fd);
}

Expected<std::unique_ptr<TcpChannel>> TcpChannel::connect(const std::string& host,
                                                          int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return make_error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return make_error("bad address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    return make_error("connect() failed to " + host + ":" + std::to_string(port));
  }
  return std::unique_ptr<TcpChannel>(new TcpChannel(fd));
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

bool TcpChannel::send_line(const std::string& line) {
  std::size_t sent = 0;
  while (sent < line.size()) {
    ssize_t w = ::send(fd_, line.data() + sent, line.size() - sent, 0);
    if (w <= 0) return false;
    sent += static_cast<std::size_t>(w);
  }
  return true;
}

std::optional<std::string> TcpChannel::read_line() {
  char chunk[4096];
  while (true) {
    std::size_t nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n <= 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::optional<Message> TcpChannel::exchange(const Message& m) {
  auto line = encode(m);
  if (!line.ok()) return std::nullopt;
  if (!send_line(line.value())) return std::nullopt;
  if (!expects_response(m)) return std::nullopt;
  auto response = read_line();
  if (!response) return std::nullopt;
  auto decoded = decode(*response);
  if (!decoded.ok()) return std::nullopt;
  return decoded.value();
}

}  // namespace grapecm
