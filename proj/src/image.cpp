#include "tryon/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "tryon/error.hpp"

namespace tryon {

Image::Image(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) throw InputError("negative image dimensions");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Image::Image(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels < 0 || height < 0 || width < 0) throw InputError("negative image dimensions");
  if (data_.size() != static_cast<std::size_t>(channels) * height * width)
    throw InputError("image data length does not match channels x height x width");
}

bool Image::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

SoftMask::SoftMask(int height, int width, float fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw InputError("negative mask dimensions");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

SoftMask::SoftMask(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(height) * width)
    throw InputError("mask data length does not match height x width");
}

bool SoftMask::is_binary() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

SoftMask SoftMask::binarized(float threshold) const {
  SoftMask out(height_, width_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

Image SoftMask::to_image() const { return Image(1, height_, width_, data_); }

SoftMask SoftMask::from_image(const Image& img, int channel) {
  if (channel < 0 || channel >= img.channels()) throw InputError("mask channel out of range");
  auto p = img.plane(channel);
  return SoftMask(img.height(), img.width(), std::vector<float>(p.begin(), p.end()));
}

int channels_for(RepresentationMode mode) {
  switch (mode) {
    case RepresentationMode::Hybrid:
    case RepresentationMode::VMDP:
      return 6;
    case RepresentationMode::VM:
    case RepresentationMode::SDP:
      return 3;
  }
  return 0;
}

std::string_view to_string(RepresentationMode mode) {
  switch (mode) {
    case RepresentationMode::Hybrid: return "hybrid";
    case RepresentationMode::VM: return "vm";
    case RepresentationMode::VMDP: return "vmdp";
    case RepresentationMode::SDP: return "sdp";
  }
  return "?";
}

RepresentationMode parse_mode(std::string_view name) {
  if (name == "hybrid") return RepresentationMode::Hybrid;
  if (name == "vm") return RepresentationMode::VM;
  if (name == "vmdp") return RepresentationMode::VMDP;
  if (name == "sdp") return RepresentationMode::SDP;
  throw ConfigError("unknown representation mode '" + std::string(name) + "'");
}

Image concat_channels(const Image& a, const Image& b) {
  // A default-constructed image (no channels, no extent) is the concatenation identity.
  if (a.channels() == 0 && a.height() == 0 && a.width() == 0) return b;
  if (b.channels() == 0 && b.height() == 0 && b.width() == 0) return a;
  if (a.height() != b.height() || a.width() != b.width())
    throw InputError("concat_channels: spatial dimensions differ");
  std::vector<float> data;
  data.reserve(a.data().size() + b.data().size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Image(a.channels() + b.channels(), a.height(), a.width(), std::move(data));
}

Image slice_channels(const Image& img, int first, int count) {
  if (first < 0 || count < 0 || first + count > img.channels())
    throw InputError("slice_channels: channel range out of bounds");
  auto begin = img.data().begin() + static_cast<std::ptrdiff_t>(first * img.plane_size());
  std::vector<float> data(begin, begin + static_cast<std::ptrdiff_t>(count * img.plane_size()));
  return Image(count, img.height(), img.width(), std::move(data));
}

namespace {

// Samples a plane at continuous coordinates (pixel centres at i + 0.5). Out-of-bounds
// taps read as zero.
float sample_zero_pad(std::span<const float> plane, int h, int w, double x, double y,
                      Interpolation interp) {
  if (interp == Interpolation::Nearest) {
    const auto ix = static_cast<long>(std::floor(x));
    const auto iy = static_cast<long>(std::floor(y));
    if (ix < 0 || iy < 0 || ix >= w || iy >= h) return 0.0f;
    return plane[static_cast<std::size_t>(iy) * w + ix];
  }
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const auto x0 = static_cast<long>(std::floor(fx));
  const auto y0 = static_cast<long>(std::floor(fy));
  const auto ax = static_cast<float>(fx - x0);
  const auto ay = static_cast<float>(fy - y0);
  auto tap = [&](long xx, long yy) -> float {
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0f;
    return plane[static_cast<std::size_t>(yy) * w + xx];
  };
  const float top = tap(x0, y0) * (1.0f - ax) + (ax != 0.0f ? tap(x0 + 1, y0) * ax : 0.0f);
  if (ay == 0.0f) return top;
  const float bottom = tap(x0, y0 + 1) * (1.0f - ax) + (ax != 0.0f ? tap(x0 + 1, y0 + 1) * ax : 0.0f);
  return top * (1.0f - ay) + bottom * ay;
}

// Same as above but clamps taps to the plane borders.
float sample_clamped(std::span<const float> plane, int h, int w, double x, double y,
                     Interpolation interp) {
  auto clampi = [](long v, int hi) { return std::clamp<long>(v, 0, hi - 1); };
  if (interp == Interpolation::Nearest) {
    const long ix = clampi(static_cast<long>(std::floor(x)), w);
    const long iy = clampi(static_cast<long>(std::floor(y)), h);
    return plane[static_cast<std::size_t>(iy) * w + ix];
  }
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const auto x0 = static_cast<long>(std::floor(fx));
  const auto y0 = static_cast<long>(std::floor(fy));
  const auto ax = static_cast<float>(fx - x0);
  const auto ay = static_cast<float>(fy - y0);
  auto tap = [&](long xx, long yy) {
    return plane[static_cast<std::size_t>(clampi(yy, h)) * w + clampi(xx, w)];
  };
  const float top = tap(x0, y0) * (1.0f - ax) + (ax != 0.0f ? tap(x0 + 1, y0) * ax : 0.0f);
  if (ay == 0.0f) return top;
  const float bottom = tap(x0, y0 + 1) * (1.0f - ax) + (ax != 0.0f ? tap(x0 + 1, y0 + 1) * ax : 0.0f);
  return top * (1.0f - ay) + bottom * ay;
}

void check_roi(const RoiTransform& roi) {
  if (!roi.valid()) throw InputError("ROI has zero area");
}

Image extract_planes(const Image& img, const RoiTransform& roi, Interpolation interp) {
  check_roi(roi);
  if (img.empty()) throw InputError("roi_extract: empty image");
  const int t = roi.target_side;
  const double scale = roi.source_side / t;
  const double ox = roi.origin_x();
  const double oy = roi.origin_y();
  Image out(img.channels(), t, t);
  for (int yy = 0; yy < t; ++yy) {
    for (int xx = 0; xx < t; ++xx) {
      double u = xx + 0.5;
      double v = yy + 0.5;
      if (roi.affine_jitter) {
        const auto& m = *roi.affine_jitter;
        const double ju = m[0] * u + m[1] * v + m[2];
        const double jv = m[3] * u + m[4] * v + m[5];
        u = ju;
        v = jv;
        // Jittered samples that leave the crop square read as background.
        if (u < 0 || v < 0 || u >= t || v >= t) continue;
      }
      const double sx = ox + u * scale;
      const double sy = oy + v * scale;
      for (int c = 0; c < img.channels(); ++c)
        out.at(c, yy, xx) = sample_zero_pad(img.plane(c), img.height(), img.width(), sx, sy, interp);
    }
  }
  return out;
}

Image inverse_planes(const Image& img, const RoiTransform& roi, int canvas_h, int canvas_w,
                     Interpolation interp) {
  check_roi(roi);
  if (roi.affine_jitter) throw InputError("roi_inverse: jittered ROI is not invertible");
  if (img.height() != roi.target_side || img.width() != roi.target_side)
    throw InputError("roi_inverse: input is not target_side x target_side");
  if (canvas_h <= 0 || canvas_w <= 0) throw InputError("roi_inverse: empty canvas");
  const double ox = roi.origin_x();
  const double oy = roi.origin_y();
  const double s = roi.source_side;
  const double scale = roi.target_side / s;
  Image out(img.channels(), canvas_h, canvas_w);
  const int y_begin = std::max(0, static_cast<int>(std::floor(oy)));
  const int y_end = std::min(canvas_h, static_cast<int>(std::ceil(oy + s)) + 1);
  const int x_begin = std::max(0, static_cast<int>(std::floor(ox)));
  const int x_end = std::min(canvas_w, static_cast<int>(std::ceil(ox + s)) + 1);
  for (int y = y_begin; y < y_end; ++y) {
    const double cy = y + 0.5;
    if (cy < oy || cy >= oy + s) continue;
    for (int x = x_begin; x < x_end; ++x) {
      const double cx = x + 0.5;
      if (cx < ox || cx >= ox + s) continue;
      const double u = (cx - ox) * scale;
      const double v = (cy - oy) * scale;
      for (int c = 0; c < img.channels(); ++c)
        out.at(c, y, x) = sample_clamped(img.plane(c), img.height(), img.width(), u, v, interp);
    }
  }
  return out;
}

}  // namespace

Image roi_extract(const Image& img, const RoiTransform& roi, Interpolation interp) {
  return extract_planes(img, roi, interp);
}

SoftMask roi_extract(const SoftMask& mask, const RoiTransform& roi, Interpolation interp) {
  return SoftMask::from_image(extract_planes(mask.to_image(), roi, interp));
}

Image roi_inverse(const Image& img, const RoiTransform& roi, int canvas_h, int canvas_w,
                  Interpolation interp) {
  return inverse_planes(img, roi, canvas_h, canvas_w, interp);
}

SoftMask roi_inverse(const SoftMask& mask, const RoiTransform& roi, int canvas_h, int canvas_w,
                     Interpolation interp) {
  return SoftMask::from_image(inverse_planes(mask.to_image(), roi, canvas_h, canvas_w, interp));
}

AffineJitterParams draw_affine_params(const AffineJitterRanges& ranges, std::uint64_t seed,
                                      int width, int height) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double half_range) {
    if (half_range == 0.0) {
      rng.discard(1);
      return 0.0;
    }
    // 53-bit mantissa draw mapped to [-half_range, half_range].
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return (2.0 * u - 1.0) * half_range;
  };
  AffineJitterParams p;
  p.tx = uniform(ranges.translate_frac * width);
  p.ty = uniform(ranges.translate_frac * height);
  p.rotate_deg = uniform(ranges.rotate_deg);
  p.scale = 1.0 + uniform(ranges.scale_frac);
  return p;
}

Affine2x3 affine_matrix(const AffineJitterParams& p, int width, int height) {
  if (p.tx == 0 && p.ty == 0 && p.rotate_deg == 0 && p.scale == 1) return identity_affine();
  // Forward map: x' = c + s R (x - c) + t. Return its inverse (output -> input).
  const double cx = width / 2.0;
  const double cy = height / 2.0;
  const double rad = p.rotate_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad) / p.scale;
  const double s = std::sin(rad) / p.scale;
  // Inverse rotation R^T / scale applied to (x' - c - t), then + c.
  const double ux = -cx - p.tx;
  const double uy = -cy - p.ty;
  return {c, s, c * ux + s * uy + cx, -s, c, -s * ux + c * uy + cy};
}

Image warp_affine(const Image& img, const Affine2x3& m, Interpolation interp) {
  if (m == identity_affine()) return img;
  Image out(img.channels(), img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double u = x + 0.5;
      const double v = y + 0.5;
      const double sx = m[0] * u + m[1] * v + m[2];
      const double sy = m[3] * u + m[4] * v + m[5];
      for (int c = 0; c < img.channels(); ++c)
        out.at(c, y, x) = sample_zero_pad(img.plane(c), img.height(), img.width(), sx, sy, interp);
    }
  }
  return out;
}

Image random_affine(const Image& img, const AffineJitterRanges& ranges, std::uint64_t seed,
                    Interpolation interp) {
  const auto params = draw_affine_params(ranges, seed, img.width(), img.height());
  return warp_affine(img, affine_matrix(params, img.width(), img.height()), interp);
}

Image composite(const Image& input, const Image& garment, const SoftMask& mask) {
  if (input.channels() != 3 || garment.channels() != 3)
    throw InputError("composite: input and garment must be 3-channel");
  if (input.height() != garment.height() || input.width() != garment.width() ||
      input.height() != mask.height() || input.width() != mask.width())
    throw InputError("composite: dimension mismatch");
  Image out(3, input.height(), input.width());
  const auto m = mask.data();
  for (int c = 0; c < 3; ++c) {
    auto in = input.plane(c);
    auto g = garment.plane(c);
    auto o = out.plane(c);
    for (std::size_t i = 0; i < m.size(); ++i)
      o[i] = std::clamp(in[i] * (1.0f - m[i]) + g[i] * m[i], 0.0f, 1.0f);
  }
  return out;
}

Image apply_mask(const Image& img, const SoftMask& mask) {
  if (img.height() != mask.height() || img.width() != mask.width())
    throw InputError("apply_mask: dimension mismatch");
  Image out = img;
  for (int c = 0; c < img.channels(); ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= mask.data()[i];
  }
  return out;
}

Image resize(const Image& img, int height, int width, Interpolation interp) {
  if (height <= 0 || width <= 0) throw InputError("resize: empty target");
  if (height == img.height() && width == img.width()) return img;
  Image out(img.channels(), height, width);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(c, y, x) = sample_clamped(img.plane(c), img.height(), img.width(), (x + 0.5) * sx,
                                         (y + 0.5) * sy, interp);
  return out;
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw InputError("to_luma: expected 1 or 3 channels");
  Image out(1, img.height(), img.width());
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  return out;
}

}  // namespace tryon
