#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "tryon/image.hpp"

namespace tryon {

struct Frame {
  std::uint64_t id = 0;
  Image image;
};

/// Ordered stream of RGB frames. `next()` returns nullopt once exhausted.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<Frame> next() = 0;
  virtual double fps() const { return 30.0; }
  /// True for sources that keep producing regardless of consumer speed (cameras).
  virtual bool live() const { return false; }
};

/// A video stored as a directory of PNG frames (lexicographic order) with an optional
/// `video.json` carrying {"fps": ...}.
class FrameDirectorySource : public FrameSource {
 public:
  explicit FrameDirectorySource(const std::filesystem::path& dir);
  std::optional<Frame> next() override;
  double fps() const override { return fps_; }
  std::size_t size() const { return files_.size(); }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t cursor_ = 0;
  double fps_ = 30.0;
};

class MemoryFrameSource : public FrameSource {
 public:
  explicit MemoryFrameSource(std::vector<Image> frames, double fps = 30.0, bool live = false);
  std::optional<Frame> next() override;
  double fps() const override { return fps_; }
  bool live() const override { return live_; }

 private:
  std::vector<Image> frames_;
  std::size_t cursor_ = 0;
  double fps_;
  bool live_;
};

/// Wraps a generator callback; useful for simulated cameras.
class CallbackFrameSource : public FrameSource {
 public:
  using Generator = std::function<std::optional<Image>(std::uint64_t index)>;
  CallbackFrameSource(Generator gen, double fps, bool live);
  std::optional<Frame> next() override;
  double fps() const override { return fps_; }
  bool live() const override { return live_; }

 private:
  Generator gen_;
  std::uint64_t index_ = 0;
  double fps_;
  bool live_;
};

/// Opens a frame directory; throws InputError when the path is not a decodable video.
std::unique_ptr<FrameSource> open_video(const std::filesystem::path& path);

/// Writes frames as `frame_000000.png`, ... plus `video.json`.
class FrameDirectoryWriter {
 public:
  FrameDirectoryWriter(const std::filesystem::path& dir, double fps);
  void write(const Image& frame);
  std::size_t count() const { return count_; }

 private:
  std::filesystem::path dir_;
  std::size_t count_ = 0;
};

std::string frame_file_name(std::uint64_t index);

}  // namespace tryon
