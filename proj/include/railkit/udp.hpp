#pragma once

// UDP transport for operator packets. Fire-and-forget, last writer wins.

#include <atomic>
#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio.hpp>

#include "railkit/teleop.hpp"

namespace railkit {

/// Receives datagrams on a background thread and hands every decodable
/// packet to `on_packet`. Decode failures are counted, never thrown.
class UdpReceiver {
 public:
  using Handler = std::function<void(const OperatorPacket&)>;
  using ErrorHandler = std::function<void(const Error&)>;

  UdpReceiver(std::uint16_t port, Handler on_packet, ErrorHandler on_error = {})
      : socket_(io_, boost::asio::ip::udp::endpoint(boost::asio::ip::address_v4::loopback(), port)),
        on_packet_(std::move(on_packet)),
        on_error_(std::move(on_error)) {
    receive();
    thread_ = std::jthread([this] { io_.run(); });
  }

  ~UdpReceiver() { stop(); }

  UdpReceiver(const UdpReceiver&) = delete;
  UdpReceiver& operator=(const UdpReceiver&) = delete;

  void stop() {
    io_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::uint16_t port() const { return socket_.local_endpoint().port(); }
  std::uint64_t received() const { return received_; }
  std::uint64_t rejected() const { return rejected_; }

 private:
  void receive() {
    socket_.async_receive_from(boost::asio::buffer(buffer_), sender_, [this](boost::system::error_code ec,
                                                                              std::size_t n) {
      if (ec == boost::asio::error::operation_aborted) return;
      if (!ec) {
        try {
          const OperatorPacket p = decode(std::span<const std::uint8_t>(buffer_.data(), n));
          ++received_;
          on_packet_(p);
        } catch (const Error& e) {
          ++rejected_;
          if (on_error_) on_error_(e);
        }
      }
      receive();
    });
  }

  boost::asio::io_context io_;
  boost::asio::ip::udp::socket socket_;
  boost::asio::ip::udp::endpoint sender_;
  // One byte larger than a packet so oversized datagrams are seen as such.
  std::array<std::uint8_t, kPacketSize + 1> buffer_{};
  Handler on_packet_;
  ErrorHandler on_error_;
  std::atomic<std::uint64_t> received_ = 0;
  std::atomic<std::uint64_t> rejected_ = 0;
  std::jthread thread_;
};

/// Connected UDP socket, so ICMP port-unreachable replies surface as
/// refused sends instead of vanishing.
class UdpSender {
 public:
  UdpSender(const std::string& host, std::uint16_t port) : socket_(io_) {
    socket_.connect({boost::asio::ip::make_address(host), port});
  }

  /// False when the kernel reported the port as refused.
  bool send(const OperatorPacket& p) {
    const PacketBytes bytes = encode(p);
    return send_raw(bytes);
  }

  bool send_raw(std::span<const std::uint8_t> bytes) {
    boost::system::error_code ec;
    socket_.send(boost::asio::buffer(bytes.data(), bytes.size()), 0, ec);
    if (ec == boost::asio::error::connection_refused) return false;
    if (ec) throw Error(ErrorCode::Io, "udp send: " + ec.message());
    return true;
  }

 private:
  boost::asio::io_context io_;
  boost::asio::ip::udp::socket socket_;
};

struct StreamStats {
  std::size_t sent = 0;
  std::size_t refused = 0;
  bool unreachable = false;
};

/// Streams a script in real time. Gives up, flagging `unreachable`, once the
/// port has kept refusing for `refuse_timeout` seconds.
inline StreamStats stream_script(UdpSender& sender, const OperatorScript& script,
                                 const std::atomic<bool>* cancel = nullptr, double refuse_timeout = 1.0) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::optional<clock::time_point> first_refusal;
  int clean = 0;  // sends since the last refusal
  StreamStats stats;
  for (const auto& tp : script_packets(script)) {
    if (cancel && *cancel) break;
    std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(tp.t)));
    ++stats.sent;
    if (sender.send(tp.packet)) {
      // A dead port refuses every other datagram; two clean sends in a row mean someone is listening.
      if (++clean >= 2) first_refusal.reset();
      continue;
    }
    clean = 0;
    ++stats.refused;
    const auto now = clock::now();
    if (!first_refusal) first_refusal = now;
    if (std::chrono::duration<double>(now - *first_refusal).count() >= refuse_timeout) {
      stats.unreachable = true;
      break;
    }
  }
  return stats;
}

}  // namespace railkit
