#include "legplan/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <charconv>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace legplan {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

ListenAddress parse_listen_address(std::string_view text) {
  ListenAddress address;
  std::string_view port = text;
  if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) {
      address.host = std::string(text.substr(0, colon));
    }
    port = text.substr(colon + 1);
  }
  unsigned value = 0;
  const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || ec != std::errc() || end != port.data() + port.size() || value > 65535) {
    throw std::invalid_argument("bad listen address '" + std::string(text) +
                                "' (expected host:port)");
  }
  address.port = static_cast<unsigned short>(value);
  return address;
}

namespace {

using Log = std::function<void(const std::string&)>;

// One WebSocket client. All handlers run on the socket's strand.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Session& session, Log log)
      : ws_(std::move(socket)), session_(session), log_(std::move(log)) {}

  ~Connection() {
    if (attached_ && !closed_) {
      session_.detach(client_);
    }
  }

  void start() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->accept(); });
  }

 private:
  void accept() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void on_accept(beast::error_code ec) {
    if (ec) {
      return;
    }
    auto [id, queue] = session_.attach();
    client_ = id;
    queue_ = std::move(queue);
    attached_ = true;
    if (log_) {
      log_(R"({"event":"client_connected","client":)" + std::to_string(client_) + "}");
    }
    std::weak_ptr<Connection> weak = shared_from_this();
    queue_->set_notify([weak] {
      if (auto self = weak.lock()) {
        net::post(self->ws_.get_executor(), [self] { self->write_next(); });
      }
    });
    write_next();
    read();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      close();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    session_.handle_text(client_, text);
    read();
  }

  void write_next() {
    if (writing_ || closed_ || !queue_) {
      return;
    }
    auto event = queue_->try_pop();
    if (!event) {
      return;
    }
    writing_ = true;
    out_ = serialize(*event);
    ws_.text(true);
    ws_.async_write(net::buffer(out_),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) {
                        self->close();
                        return;
                      }
                      self->write_next();
                    });
  }

  void close() {
    if (closed_) {
      return;
    }
    closed_ = true;
    if (attached_) {
      session_.detach(client_);
      if (log_) {
        log_(R"({"event":"client_disconnected","client":)" + std::to_string(client_) + "}");
      }
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  Session& session_;
  Log log_;
  beast::flat_buffer buffer_;
  std::string out_;
  std::shared_ptr<ClientQueue> queue_;
  Session::ClientId client_ = 0;
  bool attached_ = false;
  bool writing_ = false;
  bool closed_ = false;
};

}  // namespace

struct SessionServer::Impl {
  Impl(Session& s, const ListenAddress& address) : session(s), acceptor(ioc) {
    beast::error_code ec;
    tcp::resolver resolver(ioc);
    const auto results = resolver.resolve(address.host, std::to_string(address.port), ec);
    if (ec || results.empty()) {
      throw std::runtime_error("cannot resolve '" + address.host + "': " + ec.message());
    }
    const tcp::endpoint endpoint = results.begin()->endpoint();
    const auto fail = [&](const char* what) {
      throw std::runtime_error(std::string("cannot listen on ") + address.host + ":" +
                               std::to_string(address.port) + " (" + what + "): " + ec.message());
    };
    acceptor.open(endpoint.protocol(), ec);
    if (ec) fail("open");
    acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (ec) fail("reuse_address");
    acceptor.bind(endpoint, ec);
    if (ec) fail("bind");
    acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec) fail("listen");
  }

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == net::error::operation_aborted) {
          return;
        }
      } else {
        Log sink;
        {
          std::lock_guard lock(log_mutex);
          sink = log;
        }
        std::make_shared<Connection>(std::move(socket), session, std::move(sink))->start();
      }
      accept();
    });
  }

  Session& session;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::mutex log_mutex;
  Log log;
};

SessionServer::SessionServer(Session& session, const ListenAddress& address)
    : impl_(std::make_unique<Impl>(session, address)) {}

SessionServer::~SessionServer() { stop(); }

unsigned short SessionServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void SessionServer::set_log(std::function<void(const std::string&)> log) {
  std::lock_guard lock(impl_->log_mutex);
  impl_->log = std::move(log);
}

void SessionServer::run(int threads) {
  impl_->accept();
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) {
    pool.emplace_back([this] { impl_->ioc.run(); });
  }
  impl_->ioc.run();
  for (std::thread& t : pool) {
    t.join();
  }
}

void SessionServer::stop() {
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
}

}  // namespace legplan
