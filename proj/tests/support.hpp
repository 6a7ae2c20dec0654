#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tryon/dataset.hpp"
#include "tryon/frame_source.hpp"
#include "tryon/perception.hpp"
#include "tryon/png_io.hpp"
#include "tryon/synthetic.hpp"

namespace tryon::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tryon") {
    std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(std::mt19937_64& rng, int c, int h, int w, bool quantized = false) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(c, h, w);
  for (auto& v : img.data()) v = quantized ? std::round(u(rng) * 255.0f) / 255.0f : u(rng);
  return img;
}

inline SoftMask random_mask(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SoftMask m(h, w);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

inline void write_video(const std::filesystem::path& dir, const std::vector<Image>& frames, double fps = 30.0) {
  FrameDirectoryWriter w(dir, fps);
  for (const auto& f : frames) w.write(f);
}

inline BackendFactory stub_backends(std::set<std::uint64_t> fail_frames = {}, std::uint64_t seed = 0) {
  return [fail_frames, seed] {
    BackendConfig c;
    c.seed = seed;
    c.stub_fail_frames = fail_frames;
    return make_backends(c);
  };
}

/// Builds a stub-backend dataset from a synthetic capture whose garment is the recoloured
/// measurement garment.
inline DatasetManifest synthetic_dataset(const std::filesystem::path& out, const synthetic::CaptureConfig& capture,
                                         int roi_side, std::set<std::uint64_t> fail_frames = {}) {
  MemoryFrameSource source(synthetic::make_capture(capture), 30.0);
  DatasetBuildConfig cfg;
  cfg.garment_id = "toy";
  cfg.roi_side = roi_side;
  cfg.grid = capture.grid;
  return build_dataset(source, stub_backends(std::move(fail_frames)), cfg, out);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace tryon::testing
