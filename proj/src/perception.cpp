#include "tryon/perception.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "tryon/error.hpp"
#include "tryon/measurement_garment.hpp"

namespace tryon {
namespace {

constexpr float kBackgroundLevel = 2.0f / 255.0f;
constexpr float kColorTolerance = 0.06f;
constexpr std::size_t kMinPersonPixels = 16;

bool matches(const Image& frame, std::size_t i, const std::array<float, 3>& color) {
  for (int c = 0; c < 3; ++c)
    if (std::abs(frame.plane(c)[i] - color[c]) > kColorTolerance) return false;
  return true;
}

void require_rgb(const Image& frame) {
  if (frame.channels() != 3) throw InputError("perception backends expect 3-channel frames");
}

struct CanonicalExtent {
  double xmin, xmax, ymin, ymax;
};

const CanonicalExtent& canonical_extent() {
  static const CanonicalExtent extent = [] {
    const BodyMesh mesh = BodyModel::standard().posed({}, canonical_pose());
    CanonicalExtent e{1e9, -1e9, 1e9, -1e9};
    for (const auto& v : mesh.vertices) {
      e.xmin = std::min(e.xmin, v.x());
      e.xmax = std::max(e.xmax, v.x());
      e.ymin = std::min(e.ymin, v.y());
      e.ymax = std::max(e.ymax, v.y());
    }
    return e;
  }();
  return extent;
}

int densepose_index(BodyPart part, bool front) {
  using P = BodyPart;
  auto pick = [front](int back, int fr) { return front ? fr : back; };
  switch (part) {
    case P::Hips: case P::Spine: case P::Spine1: case P::Spine2:
    case P::LeftShoulder: case P::RightShoulder:
      return pick(dp_part::kTorsoBack, dp_part::kTorsoFront);
    case P::Neck: case P::Head:
      return pick(dp_part::kHeadBack, dp_part::kHeadFront);
    case P::LeftHand: case P::LeftHandIndex1: return dp_part::kLeftHand;
    case P::RightHand: case P::RightHandIndex1: return dp_part::kRightHand;
    case P::LeftFoot: case P::LeftToeBase: return dp_part::kLeftFoot;
    case P::RightFoot: case P::RightToeBase: return dp_part::kRightFoot;
    case P::LeftUpLeg: return pick(dp_part::kUpperLegLeftBack, dp_part::kUpperLegLeftFront);
    case P::RightUpLeg: return pick(dp_part::kUpperLegRightBack, dp_part::kUpperLegRightFront);
    case P::LeftLeg: return pick(dp_part::kLowerLegLeftBack, dp_part::kLowerLegLeftFront);
    case P::RightLeg: return pick(dp_part::kLowerLegRightBack, dp_part::kLowerLegRightFront);
    case P::LeftArm: return pick(dp_part::kUpperArmLeftBack, dp_part::kUpperArmLeftFront);
    case P::RightArm: return pick(dp_part::kUpperArmRightBack, dp_part::kUpperArmRightFront);
    case P::LeftForeArm: return pick(dp_part::kLowerArmLeftBack, dp_part::kLowerArmLeftFront);
    case P::RightForeArm: return pick(dp_part::kLowerArmRightBack, dp_part::kLowerArmRightFront);
  }
  return 0;
}

}  // namespace

bool is_background_pixel(const Image& frame, std::size_t i) {
  return frame.plane(0)[i] <= kBackgroundLevel && frame.plane(1)[i] <= kBackgroundLevel &&
         frame.plane(2)[i] <= kBackgroundLevel;
}

std::optional<BoundingBox> largest_person_box(const Image& frame) {
  require_rgb(frame);
  const int h = frame.height();
  const int w = frame.width();
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::optional<BoundingBox> best;
  long best_area = -1;
  int next_label = 0;
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < label.size(); ++start) {
    if (label[start] >= 0 || is_background_pixel(frame, start)) continue;
    const int id = next_label++;
    BoundingBox box{static_cast<int>(start % w), static_cast<int>(start / w),
                    static_cast<int>(start % w), static_cast<int>(start / w)};
    std::size_t count = 0;
    label[start] = id;
    queue.assign(1, start);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t i = queue[head];
      ++count;
      const int x = static_cast<int>(i % w);
      const int y = static_cast<int>(i / w);
      box.x0 = std::min(box.x0, x);
      box.x1 = std::max(box.x1, x);
      box.y0 = std::min(box.y0, y);
      box.y1 = std::max(box.y1, y);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
        if (label[j] >= 0 || is_background_pixel(frame, j)) continue;
        label[j] = id;
        queue.push_back(j);
      }
    }
    if (count < kMinPersonPixels) continue;
    const long area = static_cast<long>(box.width()) * box.height();
    if (area > best_area) {
      best_area = area;
      best = box;
    }
  }
  return best;
}

WeakPerspectiveCamera camera_for_box(const BoundingBox& box) {
  const auto& e = canonical_extent();
  WeakPerspectiveCamera cam;
  cam.scale = box.height() / (e.ymax - e.ymin);
  cam.tx = (box.x0 + box.x1 + 1) / 2.0 - cam.scale * (e.xmin + e.xmax) / 2.0;
  cam.ty = (box.y0 + box.y1 + 1) / 2.0 + cam.scale * (e.ymin + e.ymax) / 2.0;
  return cam;
}

StubPoseBackend::StubPoseBackend(std::uint64_t seed, std::set<std::uint64_t> fail_frames)
    : seed_(seed), fail_frames_(std::move(fail_frames)) {}

std::optional<BodyPoseEstimate> StubPoseBackend::estimate_pose(const Image& frame, std::uint64_t frame_id) {
  require_rgb(frame);
  if (fail_frames_.contains(frame_id))
    throw BackendError("stub pose backend: injected failure on frame " + std::to_string(frame_id));
  const auto box = largest_person_box(frame);
  if (!box) return std::nullopt;
  BodyPoseEstimate est;
  est.pose = canonical_pose();
  est.camera = camera_for_box(*box);
  est.confidence = 1.0;
  return est;
}

std::optional<DensePoseMap> StubDensePoseBackend::estimate_densepose(const Image& frame, std::uint64_t) {
  require_rgb(frame);
  const auto box = largest_person_box(frame);
  if (!box) return std::nullopt;
  const int h = frame.height();
  const int w = frame.width();
  const BodyMesh mesh = BodyModel::standard().posed({}, canonical_pose());
  const RasterBuffer raster = rasterize(mesh.vertices, mesh.faces, camera_for_box(*box), h, w);

  DensePoseMap dp(h, w);
  std::vector<std::uint8_t> foreground(dp.part.size());
  for (std::size_t i = 0; i < foreground.size(); ++i) foreground[i] = !is_background_pixel(frame, i);

  // FIFO over a flat vector; every pixel is enqueued at most once.
  std::vector<std::size_t> queue;
  queue.reserve(dp.part.size());
  std::vector<int> source(dp.part.size(), -1);
  for (std::size_t i = 0; i < dp.part.size(); ++i) {
    const int fi = raster.face[i];
    if (fi < 0 || !foreground[i]) continue;
    const auto& f = mesh.faces[fi];
    const auto& b = raster.bary[i];
    const int dominant = static_cast<int>(std::max_element(b.begin(), b.end()) - b.begin());
    const int vtx = f[dominant];
    dp.part[i] = static_cast<std::uint8_t>(densepose_index(mesh.vertex_part[vtx], mesh.front[vtx]));
    const Eigen::Vector2d uv = b[0] * mesh.surface_uv[f[0]] + b[1] * mesh.surface_uv[f[1]] +
                               b[2] * mesh.surface_uv[f[2]];
    dp.u[i] = std::clamp(static_cast<float>(uv.x()), 0.0f, 1.0f);
    dp.v[i] = std::clamp(static_cast<float>(uv.y()), 0.0f, 1.0f);
    source[i] = static_cast<int>(i);
    queue.push_back(i);
  }
  if (queue.empty()) {
    // Body render missed the silhouette entirely; label it as front torso.
    for (std::size_t i = 0; i < foreground.size(); ++i)
      if (foreground[i]) dp.part[i] = dp_part::kTorsoFront;
    return dp;
  }
  // Foreground pixels the render missed take the label of the nearest labelled pixel.
  std::size_t unlabelled = 0;
  for (std::size_t i = 0; i < foreground.size(); ++i) unlabelled += foreground[i] && source[i] < 0;
  for (std::size_t head = 0; head < queue.size() && unlabelled > 0; ++head) {
    const std::size_t i = queue[head];
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
      const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
      if (source[j] >= 0) continue;
      source[j] = source[i];
      if (foreground[j]) {
        --unlabelled;
        const auto s = static_cast<std::size_t>(source[i]);
        dp.part[j] = dp.part[s];
        dp.u[j] = dp.u[s];
        dp.v[j] = dp.v[s];
      }
      queue.push_back(j);
    }
  }
  return dp;
}

ParseResult StubParseBackend::parse_garment(const Image& frame, std::uint64_t) {
  require_rgb(frame);
  SoftMask mask(frame.height(), frame.width());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (is_background_pixel(frame, i)) continue;
    if (matches(frame, i, kStubSkinColor) || matches(frame, i, kStubTrouserColor)) continue;
    mask.data()[i] = 1.0f;
  }
  return {mask, apply_mask(frame, mask)};
}

void PerceptionSet::require_available() const {
  if (!pose || !pose->available()) throw BackendError("pose backend unavailable");
  if (!densepose || !densepose->available()) throw BackendError("densepose backend unavailable");
  if (!parse || !parse->available()) throw BackendError("parse backend unavailable");
}

PerceptionSet make_backends(const BackendConfig& config) {
  std::filesystem::path dir = config.adapter_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("TRYON_BACKEND_DIR")) dir = env;
  }
  PerceptionSet set;
  if (config.pose == "stub") {
    set.pose = std::make_unique<StubPoseBackend>(config.seed, config.stub_fail_frames);
  } else if (config.pose == "external") {
    set.pose = std::make_unique<ExternalPoseBackend>(dir / "pose");
  } else {
    throw ConfigError("unknown pose backend '" + config.pose + "'");
  }
  if (config.densepose == "stub") {
    set.densepose = std::make_unique<StubDensePoseBackend>(config.seed);
  } else if (config.densepose == "external") {
    set.densepose = std::make_unique<ExternalDensePoseBackend>(dir / "densepose");
  } else {
    throw ConfigError("unknown densepose backend '" + config.densepose + "'");
  }
  if (config.parse == "stub") {
    set.parse = std::make_unique<StubParseBackend>();
  } else if (config.parse == "external") {
    set.parse = std::make_unique<ExternalParseBackend>(dir / "parse");
  } else {
    throw ConfigError("unknown parse backend '" + config.parse + "'");
  }
  return set;
}

}  // namespace tryon
