#include "tryon/websocket.hpp"

#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "tryon/error.hpp"
#include "tryon/log.hpp"
#include "tryon/png_io.hpp"

namespace tryon {
namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kMaxMessageBytes = 64u << 20;

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

// One websocket with a read loop and a serialised write queue. All members are touched
// only from the io_context thread.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  using Handler = std::function<void(std::string)>;

  explicit Connection(tcp::socket socket) : ws_(std::move(socket)) {
    ws_.binary(true);
    ws_.read_message_max(kMaxMessageBytes);
  }

  websocket::stream<beast::tcp_stream>& ws() { return ws_; }

  void start(Handler on_message, std::function<void()> on_closed = {}) {
    on_message_ = std::move(on_message);
    on_closed_ = std::move(on_closed);
    read();
  }

  void send(std::string bytes) {
    net::post(ws_.get_executor(), [self = shared_from_this(), b = std::move(bytes)]() mutable {
      if (self->closed_) return;
      self->out_.push_back(std::move(b));
      if (self->out_.size() == 1) self->write();
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closed_) return;
      self->closed_ = true;
      beast::error_code ec;
      self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ec);
      self->ws_.next_layer().close();
    });
  }

 private:
  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        if (self->on_closed_) self->on_closed_();
        return;
      }
      std::string msg = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      if (self->on_message_) self->on_message_(std::move(msg));
      self->read();
    });
  }

  void write() {
    ws_.async_write(net::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->out_.clear();
        return;
      }
      self->out_.pop_front();
      if (!self->out_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buf_;
  std::deque<std::string> out_;
  Handler on_message_;
  std::function<void()> on_closed_;
  bool closed_ = false;
};

}  // namespace

std::string encode_frame_message(std::uint64_t frame_id, const Image& image) {
  if (image.channels() != 3) throw InputError("frame messages carry RGB images");
  const auto png = encode_png(image);
  std::string out;
  out.reserve(kHeaderBytes + png.size());
  put_le<std::uint64_t>(out, frame_id);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(image.width()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(image.height()));
  out.append(reinterpret_cast<const char*>(png.data()), png.size());
  return out;
}

FrameMessage decode_frame_message(const std::string& bytes) {
  if (bytes.size() <= kHeaderBytes) throw InputError("frame message shorter than its header");
  FrameMessage m;
  m.frame_id = get_le<std::uint64_t>(bytes, 0);
  const auto w = get_le<std::uint32_t>(bytes, 8);
  const auto h = get_le<std::uint32_t>(bytes, 12);
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data()) + kHeaderBytes;
  m.image = decode_png({p, bytes.size() - kHeaderBytes});
  if (m.image.width() != static_cast<int>(w) || m.image.height() != static_cast<int>(h))
    throw InputError("frame message header says " + std::to_string(w) + "x" + std::to_string(h) + ", PNG is " +
                     std::to_string(m.image.width()) + "x" + std::to_string(m.image.height()));
  if (m.image.channels() != 3) throw InputError("frame message PNG is not RGB");
  return m;
}

// ---------------------------------------------------------------------------

struct FrameSocketServer::Impl {
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  FrameHandler on_frame;
  std::mutex mu;
  std::shared_ptr<Connection> current;
  std::thread thread;

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      auto conn = std::make_shared<Connection>(std::move(socket));
      conn->ws().async_accept([this, conn](beast::error_code ec2) {
        if (ec2) return;
        std::shared_ptr<Connection> previous;
        {
          std::lock_guard lock(mu);
          previous = std::exchange(current, conn);
        }
        if (previous) previous->close();
        conn->start([this](std::string bytes) {
          try {
            on_frame(decode_frame_message(bytes));
          } catch (const InputError& e) {
            log(LogLevel::Warn, std::string("frame socket: dropping message: ") + e.what());
          }
        });
      });
      accept();
    });
  }
};

FrameSocketServer::FrameSocketServer(const std::string& host, unsigned short port, FrameHandler on_frame)
    : impl_(std::make_unique<Impl>()) {
  impl_->on_frame = std::move(on_frame);
  beast::error_code ec;
  const tcp::endpoint ep(net::ip::make_address(host, ec), port);
  if (ec) throw ConfigError("bad listen address " + host);
  auto& a = impl_->acceptor;
  a.open(ep.protocol(), ec);
  if (!ec) a.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(ep, ec);
  if (!ec) a.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port) + ": " + ec.message());
  impl_->accept();
  impl_->thread = std::thread([impl = impl_.get()] { impl->ioc.run(); });
}

FrameSocketServer::~FrameSocketServer() { stop(); }

unsigned short FrameSocketServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void FrameSocketServer::send(std::uint64_t frame_id, const Image& image) {
  std::shared_ptr<Connection> conn;
  {
    std::lock_guard lock(impl_->mu);
    conn = impl_->current;
  }
  if (conn) conn->send(encode_frame_message(frame_id, image));
}

void FrameSocketServer::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->ioc.stop();
  impl_->thread.join();
}

// ---------------------------------------------------------------------------

struct FrameSocketClient::Impl {
  net::io_context ioc;
  std::shared_ptr<Connection> conn;
  std::thread thread;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> inbox;
  bool closed = false;
};

FrameSocketClient::FrameSocketClient(const std::string& host, unsigned short port)
    : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->ioc);
    tcp::socket socket(impl_->ioc);
    net::connect(socket, resolver.resolve(host, std::to_string(port)));
    impl_->conn = std::make_shared<Connection>(std::move(socket));
    impl_->conn->ws().handshake(host + ":" + std::to_string(port), "/");
  } catch (const boost::system::system_error& e) {
    throw InputError("cannot connect to frame socket " + host + ":" + std::to_string(port) + ": " + e.what());
  }
  auto* impl = impl_.get();
  impl_->conn->start(
      [impl](std::string bytes) {
        {
          std::lock_guard lock(impl->mu);
          impl->inbox.push_back(std::move(bytes));
        }
        impl->cv.notify_all();
      },
      [impl] {
        {
          std::lock_guard lock(impl->mu);
          impl->closed = true;
        }
        impl->cv.notify_all();
      });
  impl_->thread = std::thread([impl] { impl->ioc.run(); });
}

FrameSocketClient::~FrameSocketClient() { close(); }

void FrameSocketClient::send(std::uint64_t frame_id, const Image& image) {
  impl_->conn->send(encode_frame_message(frame_id, image));
}

std::optional<FrameMessage> FrameSocketClient::receive(int timeout_ms) {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                     [&] { return !impl_->inbox.empty() || impl_->closed; });
  if (impl_->inbox.empty()) return std::nullopt;
  std::string bytes = std::move(impl_->inbox.front());
  impl_->inbox.pop_front();
  lock.unlock();
  return decode_frame_message(bytes);
}

void FrameSocketClient::close() {
  if (!impl_->thread.joinable()) return;
  impl_->conn->close();
  impl_->ioc.stop();
  impl_->thread.join();
}

}  // namespace tryon
