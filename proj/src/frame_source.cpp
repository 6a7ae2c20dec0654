#include "tryon/frame_source.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tryon/error.hpp"
#include "tryon/png_io.hpp"

namespace tryon {

namespace fs = std::filesystem;

FrameDirectorySource::FrameDirectorySource(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("video path is not a frame directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files_.push_back(entry.path());
  }
  std::sort(files_.begin(), files_.end());
  if (files_.empty()) throw InputError("video directory has no PNG frames: " + dir.string());
  const fs::path meta = dir / "video.json";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    try {
      const auto j = nlohmann::json::parse(in);
      fps_ = j.value("fps", 30.0);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("bad video.json in " + dir.string() + ": " + e.what());
    }
  }
}

std::optional<Frame> FrameDirectorySource::next() {
  if (cursor_ >= files_.size()) return std::nullopt;
  Frame f;
  f.id = cursor_;
  f.image = read_png(files_[cursor_]);
  ++cursor_;
  if (f.image.channels() == 4) f.image = slice_channels(f.image, 0, 3);
  if (f.image.channels() == 1) {
    f.image = concat_channels(concat_channels(f.image, f.image), f.image);
  }
  return f;
}

MemoryFrameSource::MemoryFrameSource(std::vector<Image> frames, double fps, bool live)
    : frames_(std::move(frames)), fps_(fps), live_(live) {}

std::optional<Frame> MemoryFrameSource::next() {
  if (cursor_ >= frames_.size()) return std::nullopt;
  Frame f{cursor_, frames_[cursor_]};
  ++cursor_;
  return f;
}

CallbackFrameSource::CallbackFrameSource(Generator gen, double fps, bool live)
    : gen_(std::move(gen)), fps_(fps), live_(live) {}

std::optional<Frame> CallbackFrameSource::next() {
  auto img = gen_(index_);
  if (!img) return std::nullopt;
  return Frame{index_++, std::move(*img)};
}

std::unique_ptr<FrameSource> open_video(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("video not found: " + path.string());
  return std::make_unique<FrameDirectorySource>(path);
}

std::string frame_file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06llu.png", static_cast<unsigned long long>(index));
  return buf;
}

FrameDirectoryWriter::FrameDirectoryWriter(const fs::path& dir, double fps) : dir_(dir) {
  fs::create_directories(dir_);
  std::ofstream(dir_ / "video.json") << nlohmann::json{{"fps", fps}}.dump() << "\n";
}

void FrameDirectoryWriter::write(const Image& frame) {
  write_png(dir_ / frame_file_name(count_), frame);
  ++count_;
}

}  // namespace tryon
