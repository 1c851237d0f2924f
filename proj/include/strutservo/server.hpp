#pragma once

// Transports for GatewayHub: a newline-delimited JSON TCP endpoint and an
// HTTP endpoint for history queries and the console's static files.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>

#include "strutservo/gateway.hpp"

namespace strutservo {

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;
};

/// "host:port", ":port" or "port".
[[nodiscard]] inline Endpoint parse_endpoint(const std::string& s) {
  Endpoint e;
  const auto colon = s.rfind(':');
  std::string port = s;
  if (colon != std::string::npos) {
    if (colon > 0) e.host = s.substr(0, colon);
    port = s.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    e.port = std::stoi(port, &used);
    if (used != port.size() || e.port < 0 || e.port > 65535) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad address '" + s + "', expected host:port");
  }
  return e;
}

namespace detail {

inline bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

}  // namespace detail

/// One thread accepts; each connection gets a reader and a writer thread.
/// Clients may come and go at any time; the engine never waits on them.
class LineServer {
 public:
  explicit LineServer(GatewayHub& hub) : hub_(hub) {}
  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;
  ~LineServer() { stop(); }

  void start(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      throw std::runtime_error("cannot resolve " + ep.host);
    listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const bool ok = listen_fd_ >= 0 && ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) == 0 &&
                    ::listen(listen_fd_, 16) == 0;
    ::freeaddrinfo(res);
    if (!ok) {
      const std::string why = std::strerror(errno);
      if (listen_fd_ >= 0) ::close(listen_fd_);
      listen_fd_ = -1;
      throw std::runtime_error("cannot listen on " + ep.host + ":" + port + ": " + why);
    }
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (::pipe(wake_) != 0) throw std::runtime_error("pipe");
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    const char c = 0;
    (void)!::write(wake_[1], &c, 1);
    if (acceptor_.joinable()) acceptor_.join();
    std::list<std::shared_ptr<Conn>> conns;
    {
      std::lock_guard lock(mu_);
      conns.swap(conns_);
    }
    for (auto& c : conns) c->shutdown();
    for (auto& c : conns) c->join();
    ::close(listen_fd_);
    ::close(wake_[0]);
    ::close(wake_[1]);
  }

  [[nodiscard]] int port() const noexcept { return port_; }

 private:
  struct Conn {
    int fd = -1;
    Session session;
    std::thread reader, writer;

    void shutdown() {
      session.mailbox->close();
      ::shutdown(fd, SHUT_RDWR);
    }
    void join() {
      if (reader.joinable()) reader.join();
      if (writer.joinable()) writer.join();
      ::close(fd);
    }
  };

  void accept_loop() {
    while (running_) {
      pollfd fds[2] = {{listen_fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
      if (::poll(fds, 2, 500) <= 0) {
        reap();
        continue;
      }
      if (fds[1].revents) break;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto conn = std::make_shared<Conn>();
      conn->fd = fd;
      conn->writer = std::thread([conn] {
        while (auto line = conn->session.mailbox->pop()) {
          line->push_back('\n');
          if (!detail::send_all(conn->fd, *line)) break;
        }
        conn->shutdown();
      });
      conn->reader = std::thread([this, conn] {
        std::string buf;
        char chunk[4096];
        for (;;) {
          const ssize_t n = ::recv(conn->fd, chunk, sizeof chunk, 0);
          if (n < 0 && errno == EINTR) continue;
          if (n <= 0) break;
          buf.append(chunk, static_cast<std::size_t>(n));
          std::size_t pos;
          while ((pos = buf.find('\n')) != std::string::npos) {
            std::string line = buf.substr(0, pos);
            buf.erase(0, pos + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) hub_.handle_line(conn->session, line);
          }
          if (buf.size() > (1u << 20)) break;  // no sane message is this long
        }
        conn->shutdown();
      });
      std::lock_guard lock(mu_);
      conns_.push_back(std::move(conn));
    }
  }

  // Joins connections whose peer went away.
  void reap() {
    std::list<std::shared_ptr<Conn>> dead;
    {
      std::lock_guard lock(mu_);
      for (auto it = conns_.begin(); it != conns_.end();) {
        if ((*it)->session.mailbox->closed()) {
          dead.push_back(*it);
          it = conns_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& c : dead) c->join();
  }

  GatewayHub& hub_;
  int listen_fd_ = -1;
  int wake_[2] = {-1, -1};
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::shared_ptr<Conn>> conns_;
};

/// GET /api/header, /api/snapshot, /api/history?start=&end=&strut_id=, plus
/// optional static files for the console.
class HttpServer {
 public:
  explicit HttpServer(GatewayHub& hub) : hub_(hub) {
    srv_.Get("/api/header", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(hub_.header().dump(), "application/json");
    });
    srv_.Get("/api/snapshot", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(Publisher::snapshot_message(*hub_.board().latest()).dump(), "application/json");
    });
    srv_.Get("/api/history", [this](const httplib::Request& req, httplib::Response& res) {
      Json q;
      try {
        q["start"] = req.has_param("start") ? std::stoll(req.get_param_value("start")) : 0;
        q["end"] = req.has_param("end") ? std::stoll(req.get_param_value("end")) : 0;
      } catch (const std::exception&) {
        res.status = 400;
        res.set_content(R"({"v":1,"type":"error","reason":"bad range"})", "application/json");
        return;
      }
      if (req.has_param("strut_id")) q["strut_id"] = req.get_param_value("strut_id");
      Json out = hub_.history_message(q);
      if (out["type"] == "error") res.status = 400;
      res.set_content(out.dump(), "application/json");
    });
  }
  ~HttpServer() { stop(); }

  void mount_static(const std::string& dir) {
    if (!srv_.set_mount_point("/", dir)) throw std::runtime_error("console directory not found: " + dir);
  }

  void start(const Endpoint& ep) {
    port_ = ep.port == 0 ? srv_.bind_to_any_port(ep.host) : (srv_.bind_to_port(ep.host, ep.port) ? ep.port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind HTTP on " + ep.host + ":" + std::to_string(ep.port));
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }

  void stop() {
    if (!thread_.joinable()) return;
    srv_.stop();
    thread_.join();
  }

  [[nodiscard]] int port() const noexcept { return port_; }

 private:
  GatewayHub& hub_;
  httplib::Server srv_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace strutservo
