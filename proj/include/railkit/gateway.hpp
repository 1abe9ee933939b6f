#pragma once

// Websocket front end for consoles, and a wall-clock loop that drives a
// Simulator while the gateway serves it.

#include <chrono>
#include <deque>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "railkit/protocol.hpp"

namespace railkit {

/// Steps a simulator in real time (scaled by `speed`) on its own thread until
/// the scenario ends or the loop is stopped. The final state stays published.
class RealtimeLoop {
 public:
  explicit RealtimeLoop(Simulator& sim, double speed = 1.0)
      : thread_([&sim, speed](std::stop_token stop) {
          using clock = std::chrono::steady_clock;
          const auto start = clock::now();
          const double dt = sim.scenario().dt;
          while (!stop.stop_requested() && !sim.finished()) {
            const double t = static_cast<double>(sim.tick()) * dt / speed;
            std::this_thread::sleep_until(
                start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(t)));
            sim.step();
          }
        }) {}

  void stop() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  std::jthread thread_;
};

namespace detail {

namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  using SnapshotSource = std::function<std::shared_ptr<const Snapshot>()>;

  WsSession(tcp::socket socket, GatewayCore& core, SnapshotSource source)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), core_(core), source_(std::move(source)) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->id_ = self->core_.open_session();
      self->send(self->core_.hello().dump());
      self->read();
      self->next_frame_ = std::chrono::steady_clock::now();
      self->tick();
    });
  }

 private:
  // Frames beyond this many unsent messages are skipped, never queued.
  static constexpr std::size_t kMaxQueue = 8;

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->send(self->core_.handle(self->id_, text).dump());
      self->read();
    });
  }

  void tick() {
    if (closed_) return;
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / core_.snapshot_hz()));
    next_frame_ = std::max(next_frame_ + period, std::chrono::steady_clock::now());
    timer_.expires_at(next_frame_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      const auto snap = self->source_();
      if (snap && snap->tick != self->last_tick_ && self->queue_.size() < kMaxQueue) {
        self->last_tick_ = snap->tick;
        self->send(snapshot_message(*snap, self->core_.registry().held_by(self->id_)).dump());
      }
      self->tick();
    });
  }

  void send(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    closed_ = true;
    timer_.cancel();
    if (id_ != 0) core_.close_session(id_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  asio::steady_timer timer_;
  beast::flat_buffer buffer_;
  GatewayCore& core_;
  SnapshotSource source_;
  std::deque<std::string> queue_;
  std::uint64_t id_ = 0;
  std::optional<std::size_t> last_tick_;
  std::chrono::steady_clock::time_point next_frame_;
  bool closed_ = false;
  bool finished_ = false;
};

}  // namespace detail

/// Serves one GatewayCore over websockets on a background thread.
class GatewayServer {
 public:
  using SnapshotSource = detail::WsSession::SnapshotSource;

  GatewayServer(GatewayCore& core, SnapshotSource source, std::uint16_t port,
                const std::string& address = "127.0.0.1")
      : core_(core),
        source_(std::move(source)),
        acceptor_(io_, {boost::asio::ip::make_address(address), port}) {
    accept();
    thread_ = std::jthread([this] { io_.run(); });
  }

  ~GatewayServer() { stop(); }

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }

  void stop() {
    if (stopped_.exchange(true)) return;
    io_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, boost::asio::ip::tcp::socket socket) {
      if (ec) return;
      std::make_shared<detail::WsSession>(std::move(socket), core_, source_)->start();
      accept();
    });
  }

  GatewayCore& core_;
  SnapshotSource source_;
  boost::asio::io_context io_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::atomic<bool> stopped_ = false;
  std::jthread thread_;
};

}  // namespace railkit
