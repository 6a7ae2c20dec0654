#include "tryon/densepose_prep.hpp"

#include <algorithm>
#include <cmath>

#include "tryon/error.hpp"

namespace tryon {

DensePoseMap::DensePoseMap(int h, int w)
    : height(h), width(w), part(static_cast<std::size_t>(h) * w, 0),
      u(static_cast<std::size_t>(h) * w, 0.0f), v(static_cast<std::size_t>(h) * w, 0.0f) {}

bool DensePoseMap::empty_body() const {
  return std::all_of(part.begin(), part.end(), [](std::uint8_t p) { return p == 0; });
}

bool DensePoseMap::valid() const {
  const auto n = static_cast<std::size_t>(height) * width;
  if (part.size() != n || u.size() != n || v.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (part[i] > kNumDensePoseParts) return false;
    if (part[i] == 0 && (u[i] != 0.0f || v[i] != 0.0f)) return false;
    if (u[i] < 0 || u[i] > 1 || v[i] < 0 || v[i] > 1) return false;
  }
  return true;
}

PartSet::PartSet(std::initializer_list<int> parts) {
  for (int p : parts) insert(p);
}

PartSet::PartSet(const std::vector<int>& parts) {
  for (int p : parts) insert(p);
}

void PartSet::insert(int part) {
  if (part < 0 || part > kNumDensePoseParts) throw InputError("part index out of range");
  member_[part] = true;
}

std::vector<int> PartSet::to_vector() const {
  std::vector<int> out;
  for (int p = 0; p <= kNumDensePoseParts; ++p)
    if (member_[p]) out.push_back(p);
  return out;
}

PartSet default_simplification_set() { return {1, 2, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14}; }

PartSet upper_body_parts() { return {1, 2, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24}; }

Image encode_iuv(const DensePoseMap& dp) {
  Image out(3, dp.height, dp.width);
  auto c0 = out.plane(0);
  auto c1 = out.plane(1);
  auto c2 = out.plane(2);
  for (std::size_t i = 0; i < dp.part.size(); ++i) {
    const int p = dp.part[i];
    if (p > kNumDensePoseParts) throw InputError("encode_iuv: part index out of range");
    if (p == 0) continue;
    c0[i] = static_cast<float>(p) / kNumDensePoseParts;
    c1[i] = dp.u[i];
    c2[i] = dp.v[i];
  }
  return out;
}

int part_from_encoded(float channel0) {
  return std::clamp(static_cast<int>(std::lround(channel0 * kNumDensePoseParts)), 0, kNumDensePoseParts);
}

DensePoseMap decode_iuv(const Image& iuv) {
  if (iuv.channels() != 3) throw InputError("decode_iuv: expected 3 channels");
  DensePoseMap dp(iuv.height(), iuv.width());
  auto c0 = iuv.plane(0);
  auto c1 = iuv.plane(1);
  auto c2 = iuv.plane(2);
  for (std::size_t i = 0; i < dp.part.size(); ++i) {
    const int p = part_from_encoded(c0[i]);
    dp.part[i] = static_cast<std::uint8_t>(p);
    if (p != 0) {
      dp.u[i] = c1[i];
      dp.v[i] = c2[i];
    }
  }
  return dp;
}

SimplifiedDensePoseMap simplify(const Image& dp_img, const PartSet& set) {
  if (dp_img.channels() != 3) throw InputError("simplify: expected an encoded 3-channel map");
  SimplifiedDensePoseMap out{dp_img};
  auto c0 = out.data.plane(0);
  auto c1 = out.data.plane(1);
  auto c2 = out.data.plane(2);
  for (std::size_t i = 0; i < c0.size(); ++i) {
    const int p = part_from_encoded(c0[i]);
    if (p != 0 && set.contains(p)) c0[i] = c1[i] = c2[i] = 1.0f;
  }
  return out;
}

std::optional<BoundingBox> upper_body_bbox(const DensePoseMap& dp) {
  const PartSet parts = upper_body_parts();
  std::optional<BoundingBox> box;
  for (int y = 0; y < dp.height; ++y) {
    for (int x = 0; x < dp.width; ++x) {
      if (!parts.contains(dp.part[dp.index(y, x)])) continue;
      if (!box) {
        box = BoundingBox{x, y, x, y};
      } else {
        box->x0 = std::min(box->x0, x);
        box->x1 = std::max(box->x1, x);
        box->y0 = std::min(box->y0, y);
        box->y1 = std::max(box->y1, y);
      }
    }
  }
  return box;
}

RoiTransform roi_from_bbox(const BoundingBox& box, double padding, int target_side) {
  RoiTransform roi;
  roi.center_x = (box.x0 + box.x1 + 1) / 2.0;
  roi.center_y = (box.y0 + box.y1 + 1) / 2.0;
  roi.source_side = std::max(box.width(), box.height()) * (1.0 + 2.0 * padding);
  roi.target_side = target_side;
  return roi;
}

}  // namespace tryon
