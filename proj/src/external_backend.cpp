#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tryon/error.hpp"
#include "tryon/perception.hpp"
#include "tryon/png_io.hpp"

extern char** environ;

namespace tryon {
namespace fs = std::filesystem;
namespace {

bool executable(const fs::path& p) { return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0; }

// Scratch directory removed on scope exit.
class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<std::uint64_t> counter{0};
    path_ = fs::temp_directory_path() /
            ("tryon-adapter-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Writes the frame, runs the adapter, returns the output directory.
void run_adapter(const fs::path& exe, const Image& frame, const ScratchDir& scratch) {
  if (!executable(exe)) throw BackendError("external adapter not found or not executable: " + exe.string());
  const fs::path in = scratch.path() / "frame.png";
  const fs::path out = scratch.path() / "out";
  fs::create_directories(out);
  write_png(in, frame);
  std::string a0 = exe.string(), a1 = in.string(), a2 = out.string();
  char* argv[] = {a0.data(), a1.data(), a2.data(), nullptr};
  pid_t pid = 0;
  if (posix_spawn(&pid, a0.c_str(), nullptr, nullptr, argv, environ) != 0)
    throw BackendError("cannot launch adapter " + a0);
  int status = 0;
  if (waitpid(pid, &status, 0) < 0 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw BackendError("adapter " + a0 + " failed");
}

nlohmann::json read_result(const fs::path& dir) {
  std::ifstream in(dir / "result.json");
  if (!in) throw BackendError("adapter produced no result.json");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("adapter result.json malformed: ") + e.what());
  }
}

}  // namespace

ExternalPoseBackend::ExternalPoseBackend(fs::path executable) : exe_(std::move(executable)) {}
bool ExternalPoseBackend::available() const { return executable(exe_); }

std::optional<BodyPoseEstimate> ExternalPoseBackend::estimate_pose(const Image& frame, std::uint64_t) {
  ScratchDir scratch;
  run_adapter(exe_, frame, scratch);
  const auto j = read_result(scratch.path() / "out");
  if (!j.value("detected", false)) return std::nullopt;
  BodyPoseEstimate est;
  try {
    const auto shape = j.at("shape").get<std::vector<double>>();
    const auto pose = j.at("pose").get<std::vector<double>>();
    const auto cam = j.at("camera").get<std::vector<double>>();
    if (shape.size() != kNumShapeParams || pose.size() != kNumPoseParams || cam.size() != 3)
      throw BackendError("adapter pose result has wrong array lengths");
    std::copy(shape.begin(), shape.end(), est.shape.begin());
    std::copy(pose.begin(), pose.end(), est.pose.begin());
    est.camera.scale = cam[0];
    est.camera.tx = cam[1];
    est.camera.ty = cam[2];
    est.confidence = j.value("confidence", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("adapter pose result malformed: ") + e.what());
  }
  if (!est.valid()) throw BackendError("adapter returned an invalid pose estimate");
  return est;
}

ExternalDensePoseBackend::ExternalDensePoseBackend(fs::path executable) : exe_(std::move(executable)) {}
bool ExternalDensePoseBackend::available() const { return executable(exe_); }

std::optional<DensePoseMap> ExternalDensePoseBackend::estimate_densepose(const Image& frame, std::uint64_t) {
  ScratchDir scratch;
  run_adapter(exe_, frame, scratch);
  const fs::path out = scratch.path() / "out";
  const auto j = read_result(out);
  if (!j.value("detected", false)) return std::nullopt;
  const Image part = read_png(out / "part.png");
  const Image u = read_png(out / "u.png");
  const Image v = read_png(out / "v.png");
  if (part.channels() != 1 || u.channels() != 1 || v.channels() != 1 || part.height() != frame.height() ||
      part.width() != frame.width() || u.height() != part.height() || v.height() != part.height() ||
      u.width() != part.width() || v.width() != part.width())
    throw BackendError("adapter DensePose planes have wrong shape");
  DensePoseMap dp(part.height(), part.width());
  for (std::size_t i = 0; i < dp.part.size(); ++i) {
    const long p = std::lround(part.plane(0)[i] * 255.0f);
    if (p > kNumDensePoseParts) throw BackendError("adapter DensePose part index out of range");
    dp.part[i] = static_cast<std::uint8_t>(p);
    if (p != 0) {
      dp.u[i] = u.plane(0)[i];
      dp.v[i] = v.plane(0)[i];
    }
  }
  if (dp.empty_body()) return std::nullopt;
  return dp;
}

ExternalParseBackend::ExternalParseBackend(fs::path executable) : exe_(std::move(executable)) {}
bool ExternalParseBackend::available() const { return executable(exe_); }

ParseResult ExternalParseBackend::parse_garment(const Image& frame, std::uint64_t) {
  ScratchDir scratch;
  run_adapter(exe_, frame, scratch);
  const Image m = read_png(scratch.path() / "out" / "mask.png");
  if (m.channels() != 1 || m.height() != frame.height() || m.width() != frame.width())
    throw BackendError("adapter mask has wrong shape");
  const SoftMask mask = SoftMask::from_image(m).binarized(0.5f);
  return {mask, apply_mask(frame, mask)};
}

}  // namespace tryon
