#include "tryon/service.hpp"

#include <condition_variable>
#include <thread>

#include <httplib.h>

#include "tryon/error.hpp"
#include "tryon/log.hpp"
#include "tryon/websocket.hpp"

namespace tryon {
using nlohmann::json;

bool PushFrameSource::push(Frame frame) {
  {
    std::lock_guard lock(mu_);
    if (last_id_ && frame.id <= *last_id_) return false;
    last_id_ = frame.id;
  }
  queue_.push(std::move(frame));
  return true;
}

struct TryOnService::Impl {
  httplib::Server http;
  std::unique_ptr<FrameSocketServer> socket;
  PushFrameSource source;
  std::thread http_thread;
  std::thread session_thread;
  std::mutex mu;
  std::condition_variable cv;
  bool stopped = false;

  explicit Impl(std::size_t depth) : source(depth) {}
};

TryOnService::TryOnService(GarmentCatalog catalog, BackendConfig backends, ServiceOptions options)
    : catalog_(std::move(catalog)),
      backend_config_(std::move(backends)),
      options_(std::move(options)),
      selection_(std::make_unique<GarmentSelection>(catalog_)) {}

TryOnService::~TryOnService() { stop(); }

void TryOnService::start() {
  if (impl_) return;
  PerceptionSet backends = make_backends(backend_config_);
  backends.require_available();
  impl_ = std::make_unique<Impl>(options_.queue_depth);
  auto& http = impl_->http;

  http.Get("/garments", [this](const httplib::Request&, httplib::Response& res) {
    const json body{{"garments", catalog_.to_json()}, {"selected", selection_->current()->entry.garment_id}};
    res.set_content(body.dump(), "application/json");
  });
  http.Post("/garments/select", [this](const httplib::Request& req, httplib::Response& res) {
    std::string id;
    try {
      id = json::parse(req.body).at("garment_id").get<std::string>();
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(json{{"error", "expected {\"garment_id\": <string>}"}}.dump(), "application/json");
      return;
    }
    try {
      selection_->select(id);
    } catch (const InputError& e) {
      res.status = 404;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    res.set_content(json{{"selected", id}}.dump(), "application/json");
  });
  http.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(stats_->snapshot().to_json().dump(), "application/json");
  });

  if (options_.http_port == 0) {
    const int p = http.bind_to_any_port(options_.host);
    if (p <= 0) throw ConfigError("cannot bind HTTP server on " + options_.host);
    http_port_ = static_cast<unsigned short>(p);
  } else {
    if (!http.bind_to_port(options_.host, options_.http_port))
      throw ConfigError("cannot bind HTTP server on " + options_.host + ":" + std::to_string(options_.http_port));
    http_port_ = options_.http_port;
  }
  const unsigned short wanted = options_.socket_port.value_or(options_.http_port == 0 ? 0 : options_.http_port + 1);
  impl_->socket = std::make_unique<FrameSocketServer>(options_.host, wanted, [impl = impl_.get()](FrameMessage m) {
    if (!impl->source.push(Frame{m.frame_id, std::move(m.image)}))
      log(LogLevel::Info, "frame socket: discarding stale frame " + std::to_string(m.frame_id));
  });
  socket_port_ = impl_->socket->port();
  impl_->http_thread = std::thread([impl = impl_.get()] { impl->http.listen_after_bind(); });
  impl_->http.wait_until_ready();

  SessionOptions so;
  so.live = true;
  so.queue_depth = options_.queue_depth;
  so.pipeline = options_.pipeline;
  so.stats = stats_;
  so.on_fps = [](const FpsReport& r) { log(LogLevel::Info, "fps " + r.to_json().dump()); };
  impl_->session_thread = std::thread([this, so, b = std::move(backends)]() mutable {
    try {
      run_session(impl_->source, std::move(b), *selection_,
                  [this](TryOnFrameResult r) { impl_->socket->send(r.frame_id, r.output); }, so);
    } catch (const std::exception& e) {
      log(LogLevel::Error, std::string("session ended with error: ") + e.what());
    }
  });
  log(LogLevel::Info, "serving HTTP on " + options_.host + ":" + std::to_string(http_port_) + ", frame socket on " +
                          std::to_string(socket_port_));
}

void TryOnService::wait() {
  if (!impl_) return;
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait(lock, [&] { return impl_->stopped; });
}

void TryOnService::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  impl_->cv.notify_all();
  impl_->source.close();
  if (impl_->session_thread.joinable()) impl_->session_thread.join();
  impl_->http.stop();
  if (impl_->http_thread.joinable()) impl_->http_thread.join();
  impl_->socket->stop();
}

}  // namespace tryon
