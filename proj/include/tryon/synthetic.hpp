#pragma once

#include <cstdint>
#include <vector>

#include "tryon/body_model.hpp"
#include "tryon/measurement_garment.hpp"

namespace tryon::synthetic {

/// Fixed per-channel affine recolouring that turns a measurement-garment render into the
/// synthetic "target garment" worn in generated capture frames.
Image recolor_measurement(const Image& vm);

/// Foreground mask of a rendered image (any channel non-zero).
SoftMask foreground(const Image& img);

/// A canonical-pose person wearing the recoloured measurement garment, placed by `camera`,
/// on a black background. The garment is painted with the camera the stub pose backend
/// recovers from the silhouette, so stub-built datasets are exactly consistent.
Image render_person(const WeakPerspectiveCamera& camera, int height, int width, const GridTexture& grid);

/// Filled disc of the given colour on black.
Image disc_person(int height, int width, double cx, double cy, double radius,
                  std::array<float, 3> color = {0.3f, 0.6f, 0.55f});

struct CaptureConfig {
  int width = 96;
  int height = 128;
  int frames = 30;
  std::uint64_t seed = 1;
  GridTexture grid{32, 8, {0.12f, 0.12f, 0.12f}, {0.85f, 0.85f, 0.85f}};
  /// Body height as a fraction of the frame height.
  double min_body_frac = 0.72;
  double max_body_frac = 0.92;
  /// Horizontal wander of the body centre as a fraction of the frame width.
  double wander_frac = 0.12;
};

/// Camera used for frame `index` of a synthetic capture.
WeakPerspectiveCamera capture_camera(const CaptureConfig& config, int index);

std::vector<Image> make_capture(const CaptureConfig& config);

}  // namespace tryon::synthetic
