#pragma once

#include <memory>
#include <optional>
#include <string>

#include "tryon/engine.hpp"
#include "tryon/perception.hpp"

namespace tryon {

/// Live source fed from outside (the frame socket). Frames whose id does not increase are
/// discarded, so a session always sees strictly increasing ids.
class PushFrameSource : public FrameSource {
 public:
  explicit PushFrameSource(std::size_t capacity = 2) : queue_(capacity) {}
  /// False when the frame was discarded as stale.
  bool push(Frame frame);
  void close() { queue_.close(); }
  std::optional<Frame> next() override { return queue_.pop(); }
  bool live() const override { return true; }
  std::size_t dropped() const { return queue_.dropped(); }

 private:
  FrameQueue<Frame> queue_;
  std::mutex mu_;
  std::optional<std::uint64_t> last_id_;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  unsigned short http_port = 8080;
  /// Frame socket port; defaults to http_port + 1 (or a free port when http_port is 0).
  std::optional<unsigned short> socket_port;
  std::size_t queue_depth = 2;
  PipelineOptions pipeline;
};

/// HTTP control plane (GET /garments, POST /garments/select, GET /stats) plus the binary
/// frame socket, driving one live session.
class TryOnService {
 public:
  TryOnService(GarmentCatalog catalog, BackendConfig backends, ServiceOptions options = {});
  ~TryOnService();
  TryOnService(const TryOnService&) = delete;
  TryOnService& operator=(const TryOnService&) = delete;

  /// Binds both ports and starts serving. Throws ConfigError when a port is unavailable
  /// and BackendError when a perception backend is missing.
  void start();
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

  unsigned short http_port() const { return http_port_; }
  unsigned short socket_port() const { return socket_port_; }
  GarmentSelection& selection() { return *selection_; }
  std::shared_ptr<SessionStats> stats() const { return stats_; }

 private:
  struct Impl;
  GarmentCatalog catalog_;
  BackendConfig backend_config_;
  ServiceOptions options_;
  std::unique_ptr<GarmentSelection> selection_;
  std::shared_ptr<SessionStats> stats_ = std::make_shared<SessionStats>();
  unsigned short http_port_ = 0;
  unsigned short socket_port_ = 0;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tryon
