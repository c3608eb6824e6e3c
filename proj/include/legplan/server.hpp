#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "legplan/session.hpp"

namespace legplan {

struct ListenAddress {
  std::string host = "127.0.0.1";
  unsigned short port = 0;
};

/// "host:port", ":port" or "port". Throws std::invalid_argument.
ListenAddress parse_listen_address(std::string_view text);

/// WebSocket front end of a Session: one JSON frame per message and event.
class SessionServer {
 public:
  /// Binds immediately; throws std::runtime_error when the address is taken.
  SessionServer(Session& session, const ListenAddress& address);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// The bound port (useful with port 0).
  unsigned short port() const;
  /// Serves until stop(); uses `threads` I/O threads.
  void run(int threads = 2);
  /// Thread-safe; run() returns soon after.
  void stop();
  /// Optional one-line log sink for connection events.
  void set_log(std::function<void(const std::string&)> log);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace legplan
