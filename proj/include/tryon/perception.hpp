#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "tryon/body_model.hpp"
#include "tryon/densepose_prep.hpp"
#include "tryon/image.hpp"

namespace tryon {

/// Garment segmentation: binarized mask and the frame restricted to it.
struct ParseResult {
  SoftMask garment_mask;
  Image garment_image;
};

/// 3D body pose estimation. Returns nullopt when no person is present; throws BackendError
/// when the backend itself fails.
class PoseBackend {
 public:
  virtual ~PoseBackend() = default;
  virtual std::string name() const = 0;
  virtual bool available() const = 0;
  virtual std::optional<BodyPoseEstimate> estimate_pose(const Image& frame, std::uint64_t frame_id) = 0;
};

class DensePoseBackend {
 public:
  virtual ~DensePoseBackend() = default;
  virtual std::string name() const = 0;
  virtual bool available() const = 0;
  virtual std::optional<DensePoseMap> estimate_densepose(const Image& frame, std::uint64_t frame_id) = 0;
};

class ParseBackend {
 public:
  virtual ~ParseBackend() = default;
  virtual std::string name() const = 0;
  virtual bool available() const = 0;
  virtual ParseResult parse_garment(const Image& frame, std::uint64_t frame_id) = 0;
};

struct BackendConfig {
  std::string pose = "stub";
  std::string densepose = "stub";
  std::string parse = "stub";
  std::uint64_t seed = 0;
  /// Frame ids on which the stub pose backend raises BackendError (fault injection).
  std::set<std::uint64_t> stub_fail_frames;
  /// Directory holding external adapters; empty means $TRYON_BACKEND_DIR.
  std::filesystem::path adapter_dir;
};

/// One instance of each backend. Instances may hold state and belong to one worker.
struct PerceptionSet {
  std::unique_ptr<PoseBackend> pose;
  std::unique_ptr<DensePoseBackend> densepose;
  std::unique_ptr<ParseBackend> parse;

  /// Throws BackendError naming the first missing backend.
  void require_available() const;
};

PerceptionSet make_backends(const BackendConfig& config);

// Stub world: synthetic frames on a black background where the person is drawn with
// reserved skin and trouser colours and everything else on the body is garment.
inline constexpr std::array<float, 3> kStubSkinColor{0.87f, 0.72f, 0.60f};
inline constexpr std::array<float, 3> kStubTrouserColor{0.15f, 0.15f, 0.35f};

bool is_background_pixel(const Image& frame, std::size_t index);

/// Stub pose: fits the canonical body to the largest foreground component's bounding box.
class StubPoseBackend : public PoseBackend {
 public:
  explicit StubPoseBackend(std::uint64_t seed = 0, std::set<std::uint64_t> fail_frames = {});
  std::string name() const override { return "stub"; }
  bool available() const override { return true; }
  std::optional<BodyPoseEstimate> estimate_pose(const Image& frame, std::uint64_t frame_id) override;

 private:
  std::uint64_t seed_;
  std::set<std::uint64_t> fail_frames_;
};

/// Stub DensePose: renders the stub pose's body with part labels and snaps the labels to
/// the frame's foreground silhouette.
class StubDensePoseBackend : public DensePoseBackend {
 public:
  explicit StubDensePoseBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string name() const override { return "stub"; }
  bool available() const override { return true; }
  std::optional<DensePoseMap> estimate_densepose(const Image& frame, std::uint64_t frame_id) override;

 private:
  std::uint64_t seed_;
};

/// Stub parser: garment = foreground pixels that are neither skin nor trousers.
class StubParseBackend : public ParseBackend {
 public:
  std::string name() const override { return "stub"; }
  bool available() const override { return true; }
  ParseResult parse_garment(const Image& frame, std::uint64_t frame_id) override;
};

/// Subprocess adapters. Each is an executable `<adapter_dir>/<kind>` run as
/// `<exe> <frame.png> <out_dir>`; see README for the result files.
class ExternalPoseBackend : public PoseBackend {
 public:
  explicit ExternalPoseBackend(std::filesystem::path executable);
  std::string name() const override { return "external"; }
  bool available() const override;
  std::optional<BodyPoseEstimate> estimate_pose(const Image& frame, std::uint64_t frame_id) override;

 private:
  std::filesystem::path exe_;
};

class ExternalDensePoseBackend : public DensePoseBackend {
 public:
  explicit ExternalDensePoseBackend(std::filesystem::path executable);
  std::string name() const override { return "external"; }
  bool available() const override;
  std::optional<DensePoseMap> estimate_densepose(const Image& frame, std::uint64_t frame_id) override;

 private:
  std::filesystem::path exe_;
};

class ExternalParseBackend : public ParseBackend {
 public:
  explicit ExternalParseBackend(std::filesystem::path executable);
  std::string name() const override { return "external"; }
  bool available() const override;
  ParseResult parse_garment(const Image& frame, std::uint64_t frame_id) override;

 private:
  std::filesystem::path exe_;
};

/// Largest-bounding-box foreground component, 4-connected.
std::optional<BoundingBox> largest_person_box(const Image& frame);
/// Camera that maps the canonical body's full silhouette onto `box`.
WeakPerspectiveCamera camera_for_box(const BoundingBox& box);

}  // namespace tryon
