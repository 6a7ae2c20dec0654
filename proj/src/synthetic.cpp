#include "tryon/synthetic.hpp"

#include <random>

#include "tryon/perception.hpp"

namespace tryon::synthetic {
namespace {

constexpr std::array<float, 3> kOffset{0.9f, 0.2f, 0.3f};
constexpr std::array<float, 3> kGain{-0.7f, 0.5f, 0.3f};

bool is_trouser_part(BodyPart p) {
  switch (p) {
    case BodyPart::Hips: case BodyPart::LeftUpLeg: case BodyPart::RightUpLeg: case BodyPart::LeftLeg:
    case BodyPart::RightLeg: case BodyPart::LeftFoot: case BodyPart::RightFoot:
    case BodyPart::LeftToeBase: case BodyPart::RightToeBase:
      return true;
    default:
      return false;
  }
}

}  // namespace

Image recolor_measurement(const Image& vm) {
  Image out(3, vm.height(), vm.width());
  for (std::size_t i = 0; i < vm.plane_size(); ++i) {
    if (vm.plane(0)[i] == 0.0f && vm.plane(1)[i] == 0.0f && vm.plane(2)[i] == 0.0f) continue;
    for (int c = 0; c < 3; ++c) out.plane(c)[i] = kOffset[c] + kGain[c] * vm.plane(c)[i];
  }
  return out;
}

SoftMask foreground(const Image& img) {
  SoftMask m(img.height(), img.width());
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (int c = 0; c < img.channels(); ++c) {
      if (img.plane(c)[i] != 0.0f) {
        m.data()[i] = 1.0f;
        break;
      }
    }
  }
  return m;
}

Image render_person(const WeakPerspectiveCamera& camera, int height, int width, const GridTexture& grid) {
  const BodyMesh body = BodyModel::standard().posed({}, canonical_pose());
  const RasterBuffer raster = rasterize(body.vertices, body.faces, camera, height, width);
  Image frame(3, height, width);
  for (std::size_t i = 0; i < frame.plane_size(); ++i) {
    const int fi = raster.face[i];
    if (fi < 0) continue;
    const BodyPart part = body.vertex_part[body.faces[fi][0]];
    // Head, hands and the torso/arms under the garment read as skin.
    const auto& color = is_trouser_part(part) ? kStubTrouserColor : kStubSkinColor;
    for (int c = 0; c < 3; ++c) frame.plane(c)[i] = color[c];
  }
  const auto box = largest_person_box(frame);
  if (!box) return frame;
  BodyPoseEstimate est;
  est.pose = canonical_pose();
  est.camera = camera_for_box(*box);
  const Image vm = render_measurement_garment(trim_smpl(est), grid, est.camera, height, width);
  const Image garment = recolor_measurement(vm);
  const SoftMask vm_mask = foreground(vm);
  for (std::size_t i = 0; i < frame.plane_size(); ++i) {
    if (vm_mask.data()[i] == 0.0f || raster.face[i] < 0) continue;
    for (int c = 0; c < 3; ++c) frame.plane(c)[i] = garment.plane(c)[i];
  }
  return frame;
}

Image disc_person(int height, int width, double cx, double cy, double radius, std::array<float, 3> color) {
  Image img(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= radius * radius)
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
    }
  return img;
}

WeakPerspectiveCamera capture_camera(const CaptureConfig& config, int index) {
  std::mt19937_64 rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double body_frac = config.min_body_frac + (config.max_body_frac - config.min_body_frac) * unit(rng);
  const double wander = (2 * unit(rng) - 1) * config.wander_frac;
  // Canonical body spans roughly 1.75 m vertically with the pelvis ~0.92 m above the soles.
  WeakPerspectiveCamera cam;
  cam.scale = body_frac * config.height / 1.75;
  cam.tx = config.width * (0.5 + wander);
  cam.ty = config.height * 0.5 + cam.scale * (0.92 - 1.75 / 2);
  return cam;
}

std::vector<Image> make_capture(const CaptureConfig& config) {
  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(config.frames));
  for (int i = 0; i < config.frames; ++i)
    frames.push_back(render_person(capture_camera(config, i), config.height, config.width, config.grid));
  return frames;
}

}  // namespace tryon::synthetic
