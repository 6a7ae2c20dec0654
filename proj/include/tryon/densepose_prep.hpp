#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "tryon/image.hpp"

namespace tryon {

/// 24-part DensePose convention; 0 is background.
inline constexpr int kNumDensePoseParts = 24;

namespace dp_part {
inline constexpr int kTorsoBack = 1, kTorsoFront = 2, kRightHand = 3, kLeftHand = 4, kLeftFoot = 5,
                     kRightFoot = 6, kUpperLegRightBack = 7, kUpperLegLeftBack = 8,
                     kUpperLegRightFront = 9, kUpperLegLeftFront = 10, kLowerLegRightBack = 11,
                     kLowerLegLeftBack = 12, kLowerLegRightFront = 13, kLowerLegLeftFront = 14,
                     kUpperArmLeftBack = 15, kUpperArmRightBack = 16, kUpperArmLeftFront = 17,
                     kUpperArmRightFront = 18, kLowerArmLeftBack = 19, kLowerArmRightBack = 20,
                     kLowerArmLeftFront = 21, kLowerArmRightFront = 22, kHeadBack = 23, kHeadFront = 24;
}

/// Per-pixel part index with surface coordinates.
struct DensePoseMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> part;
  std::vector<float> u;
  std::vector<float> v;

  DensePoseMap() = default;
  DensePoseMap(int h, int w);

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  bool empty_body() const;
  /// Checks part range and that u = v = 0 on background.
  bool valid() const;
  bool operator==(const DensePoseMap&) const = default;
};

/// Membership set over part indices 0..24.
class PartSet {
 public:
  PartSet() = default;
  PartSet(std::initializer_list<int> parts);
  explicit PartSet(const std::vector<int>& parts);

  bool contains(int part) const { return part >= 0 && part <= kNumDensePoseParts && member_[part]; }
  void insert(int part);
  std::vector<int> to_vector() const;
  bool operator==(const PartSet&) const = default;

 private:
  std::array<bool, kNumDensePoseParts + 1> member_{};
};

/// Torso plus every leg and foot part.
PartSet default_simplification_set();
/// Torso, arms and head: the parts that place the upper-body crop.
PartSet upper_body_parts();

/// Channel 0 = part / 24, channel 1 = u, channel 2 = v; background is (0,0,0).
Image encode_iuv(const DensePoseMap& dp);
DensePoseMap decode_iuv(const Image& iuv);
int part_from_encoded(float channel0);

/// DensePose raster with the configured parts painted white.
struct SimplifiedDensePoseMap {
  Image data;
};

SimplifiedDensePoseMap simplify(const Image& dp_img, const PartSet& simplification_set);

/// Inclusive pixel bounds.
struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const BoundingBox&) const = default;
};

std::optional<BoundingBox> upper_body_bbox(const DensePoseMap& dp);

/// Square ROI centred on the box, side = longest box side enlarged by `padding` on each side.
RoiTransform roi_from_bbox(const BoundingBox& box, double padding, int target_side);

}  // namespace tryon
