#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "tryon/image.hpp"

namespace tryon {

/// One binary frame message: `[frame_id u64][width u32][height u32][PNG bytes]`,
/// integers little-endian.
struct FrameMessage {
  std::uint64_t frame_id = 0;
  Image image;
};

std::string encode_frame_message(std::uint64_t frame_id, const Image& image);
/// Throws InputError on a short header, an undecodable PNG or a size mismatch.
FrameMessage decode_frame_message(const std::string& bytes);

/// WebSocket endpoint for frame streaming. Serves one client at a time: a new connection
/// replaces the previous one. I/O runs on its own thread.
class FrameSocketServer {
 public:
  using FrameHandler = std::function<void(FrameMessage)>;
  /// Port 0 picks a free port; see port().
  FrameSocketServer(const std::string& host, unsigned short port, FrameHandler on_frame);
  ~FrameSocketServer();
  FrameSocketServer(const FrameSocketServer&) = delete;
  FrameSocketServer& operator=(const FrameSocketServer&) = delete;

  unsigned short port() const;
  /// Queues a frame for the connected client; dropped silently when nobody is connected.
  void send(std::uint64_t frame_id, const Image& image);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking client, used by tests and tools.
class FrameSocketClient {
 public:
  FrameSocketClient(const std::string& host, unsigned short port);
  ~FrameSocketClient();
  void send(std::uint64_t frame_id, const Image& image);
  /// Waits up to `timeout_ms` for the next message; nullopt on timeout or close.
  std::optional<FrameMessage> receive(int timeout_ms = 5000);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tryon
