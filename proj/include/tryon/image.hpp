#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace tryon {

/// Channel-major float raster with values in [0,1]. Three-channel images are RGB.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f);
  Image(int channels, int height, int width, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// True when every value lies in [0,1].
  bool in_unit_range() const;

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Single-channel alpha in [0,1].
class SoftMask {
 public:
  SoftMask() = default;
  SoftMask(int height, int width, float fill = 0.0f);
  SoftMask(int height, int width, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool is_binary() const;
  SoftMask binarized(float threshold = 0.5f) const;

  Image to_image() const;
  static SoftMask from_image(const Image& img, int channel = 0);

  bool operator==(const SoftMask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

enum class Interpolation { Nearest, Bilinear };

/// Row-major 2x3 affine matrix mapping output pixel coordinates to input coordinates
/// (continuous space, pixel centers at i + 0.5).
using Affine2x3 = std::array<double, 6>;

constexpr Affine2x3 identity_affine() { return {1, 0, 0, 0, 1, 0}; }

/// Square crop of `source_side` pixels centred on (center_x, center_y), resampled to
/// `target_side` x `target_side`, optionally followed by an affine jitter.
struct RoiTransform {
  double center_x = 0;
  double center_y = 0;
  double source_side = 0;
  int target_side = 0;
  std::optional<Affine2x3> affine_jitter;

  double origin_x() const { return center_x - source_side / 2; }
  double origin_y() const { return center_y - source_side / 2; }
  bool valid() const { return source_side > 0 && target_side > 0; }

  bool operator==(const RoiTransform&) const = default;
};

/// Ranges for training-time augmentation, expressed as fractions of the image side
/// and degrees.
struct AffineJitterRanges {
  double translate_frac = 0.05;
  double rotate_deg = 3.0;
  double scale_frac = 0.05;

  bool operator==(const AffineJitterRanges&) const = default;
};

struct AffineJitterParams {
  double tx = 0;  // pixels
  double ty = 0;
  double rotate_deg = 0;
  double scale = 1;
};

enum class RepresentationMode { Hybrid, VM, VMDP, SDP };

int channels_for(RepresentationMode mode);
std::string_view to_string(RepresentationMode mode);
RepresentationMode parse_mode(std::string_view name);

/// Network input: virtual measurement garment and/or DensePose-derived channels.
struct HybridRepresentation {
  RepresentationMode mode = RepresentationMode::Hybrid;
  Image data;
};

Image concat_channels(const Image& a, const Image& b);
Image slice_channels(const Image& img, int first, int count);

Image roi_extract(const Image& img, const RoiTransform& roi,
                  Interpolation interp = Interpolation::Bilinear);
SoftMask roi_extract(const SoftMask& mask, const RoiTransform& roi,
                     Interpolation interp = Interpolation::Nearest);

Image roi_inverse(const Image& img, const RoiTransform& roi, int canvas_h, int canvas_w,
                  Interpolation interp = Interpolation::Bilinear);
SoftMask roi_inverse(const SoftMask& mask, const RoiTransform& roi, int canvas_h, int canvas_w,
                     Interpolation interp = Interpolation::Nearest);

/// Deterministic jitter draw; the same seed always yields the same parameters.
AffineJitterParams draw_affine_params(const AffineJitterRanges& ranges, std::uint64_t seed,
                                      int width, int height);
/// Output-to-input affine about the image centre for the given parameters.
Affine2x3 affine_matrix(const AffineJitterParams& params, int width, int height);

/// Warps by a seeded random affine; pixels sampled outside the source are zero.
Image random_affine(const Image& img, const AffineJitterRanges& ranges, std::uint64_t seed,
                    Interpolation interp = Interpolation::Bilinear);
Image warp_affine(const Image& img, const Affine2x3& out_to_in, Interpolation interp);

/// input * (1 - mask) + garment * mask, clamped to [0,1].
Image composite(const Image& input, const Image& garment, const SoftMask& mask);

/// Multiplies every channel by the mask.
Image apply_mask(const Image& img, const SoftMask& mask);

/// Area-free resize used for working-resolution downscaling and comparison sizes.
Image resize(const Image& img, int height, int width, Interpolation interp = Interpolation::Bilinear);

/// Rec. 601 luma of a 3-channel image; 1-channel images pass through.
Image to_luma(const Image& img);

}  // namespace tryon
