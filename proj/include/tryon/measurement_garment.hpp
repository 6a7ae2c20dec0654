#pragma once

#include <array>
#include <vector>

#include "tryon/body_model.hpp"
#include "tryon/image.hpp"

namespace tryon {

/// Grid pattern painted on the measurement garment, in texel units.
struct GridTexture {
  int cell_size = 32;
  int line_width = 3;
  std::array<float, 3> line_color{0.12f, 0.12f, 0.12f};
  std::array<float, 3> fill_color{0.85f, 0.85f, 0.85f};

  void validate() const;
  std::array<float, 3> sample(double u, double v) const;
  bool operator==(const GridTexture&) const = default;
};

/// Upper body with full arms, posed, with texel-space UVs.
struct TrimmedBodyMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Eigen::Vector2d> uv;
  std::vector<BodyPart> vertex_part;
};

/// Removes head, hands and lower body using the part-label table. Throws InputError on
/// non-finite parameters.
TrimmedBodyMesh trim_smpl(const BodyPoseEstimate& pose,
                          const PartLabelTable& labels = PartLabelTable::bundled());

/// Flat-shaded, z-buffered render of the grid-textured mesh on a black background.
Image render_measurement_garment(const TrimmedBodyMesh& mesh, const GridTexture& tex,
                                 const WeakPerspectiveCamera& camera, int out_h, int out_w);

/// Per-pixel visible face and barycentric weights; face = -1 where nothing was drawn.
struct RasterBuffer {
  int height = 0;
  int width = 0;
  std::vector<int> face;
  std::vector<float> depth;
  std::vector<std::array<float, 3>> bary;

  bool covered(int y, int x) const { return face[static_cast<std::size_t>(y) * width + x] >= 0; }
};

Eigen::Vector2d project(const Vec3& p, const WeakPerspectiveCamera& camera);

/// Rasterizes at pixel centres; faces with any vertex at or behind the camera plane are
/// dropped. Larger z is nearer.
RasterBuffer rasterize(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& faces,
                       const WeakPerspectiveCamera& camera, int height, int width);

}  // namespace tryon
