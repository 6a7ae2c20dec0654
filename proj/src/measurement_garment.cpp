#include "tryon/measurement_garment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tryon/error.hpp"

namespace tryon {

void GridTexture::validate() const {
  if (line_width < 1 || cell_size <= line_width)
    throw ConfigError("grid texture requires cell_size > line_width >= 1");
}

std::array<float, 3> GridTexture::sample(double u, double v) const {
  const double cu = u - cell_size * std::floor(u / cell_size);
  const double cv = v - cell_size * std::floor(v / cell_size);
  return (cu < line_width || cv < line_width) ? line_color : fill_color;
}

TrimmedBodyMesh trim_smpl(const BodyPoseEstimate& pose, const PartLabelTable& labels) {
  if (!pose.valid()) throw InputError("trim_smpl: non-finite or invalid pose parameters");
  const BodyModel& model = BodyModel::standard();
  if (labels.vertex_part.size() != model.vertex_count())
    throw ConfigError("part label table does not match the body model");
  const BodyMesh full = model.posed(pose.shape, pose.pose);

  std::vector<bool> keep(full.vertices.size());
  for (std::size_t v = 0; v < keep.size(); ++v)
    keep[v] = is_measurement_part(part_from_name(labels.part_names[labels.vertex_part[v]]));

  TrimmedBodyMesh out;
  std::vector<int> remap(full.vertices.size(), -1);
  for (std::size_t v = 0; v < keep.size(); ++v) {
    if (!keep[v]) continue;
    remap[v] = static_cast<int>(out.vertices.size());
    out.vertices.push_back(full.vertices[v]);
    out.uv.push_back(full.uv[v]);
    out.vertex_part.push_back(full.vertex_part[v]);
  }
  for (const auto& f : full.faces) {
    if (keep[f[0]] && keep[f[1]] && keep[f[2]]) out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  }
  return out;
}

Eigen::Vector2d project(const Vec3& p, const WeakPerspectiveCamera& camera) {
  return {camera.scale * p.x() + camera.tx, -camera.scale * p.y() + camera.ty};
}

RasterBuffer rasterize(const std::vector<Vec3>& vertices, const std::vector<std::array<int, 3>>& faces,
                       const WeakPerspectiveCamera& camera, int height, int width) {
  RasterBuffer buf;
  buf.height = height;
  buf.width = width;
  const auto n = static_cast<std::size_t>(height) * width;
  buf.face.assign(n, -1);
  buf.depth.assign(n, -std::numeric_limits<float>::infinity());
  buf.bary.assign(n, {0, 0, 0});

  std::vector<Eigen::Vector2d> px(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) px[i] = project(vertices[i], camera);

  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const auto& f = faces[fi];
    if (vertices[f[0]].z() >= camera.depth || vertices[f[1]].z() >= camera.depth ||
        vertices[f[2]].z() >= camera.depth)
      continue;
    const Eigen::Vector2d& a = px[f[0]];
    const Eigen::Vector2d& b = px[f[1]];
    const Eigen::Vector2d& c = px[f[2]];
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double pxx = x + 0.5;
        const double w0 = ((c.x() - b.x()) * (py - b.y()) - (c.y() - b.y()) * (pxx - b.x())) / area;
        const double w1 = ((a.x() - c.x()) * (py - c.y()) - (a.y() - c.y()) * (pxx - c.x())) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = w0 * vertices[f[0]].z() + w1 * vertices[f[1]].z() + w2 * vertices[f[2]].z();
        const std::size_t idx = static_cast<std::size_t>(y) * width + x;
        if (z > buf.depth[idx]) {
          buf.depth[idx] = static_cast<float>(z);
          buf.face[idx] = static_cast<int>(fi);
          buf.bary[idx] = {static_cast<float>(w0), static_cast<float>(w1), static_cast<float>(w2)};
        }
      }
    }
  }
  return buf;
}

Image render_measurement_garment(const TrimmedBodyMesh& mesh, const GridTexture& tex,
                                 const WeakPerspectiveCamera& camera, int out_h, int out_w) {
  tex.validate();
  if (!(camera.scale > 0)) throw InputError("render: camera scale must be positive");
  if (out_h <= 0 || out_w <= 0) throw InputError("render: empty output size");
  Image out(3, out_h, out_w);
  if (mesh.faces.empty()) return out;
  const RasterBuffer buf = rasterize(mesh.vertices, mesh.faces, camera, out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * out_w + x;
      const int fi = buf.face[idx];
      if (fi < 0) continue;
      const auto& f = mesh.faces[fi];
      const auto& w = buf.bary[idx];
      const Eigen::Vector2d uv = w[0] * mesh.uv[f[0]] + w[1] * mesh.uv[f[1]] + w[2] * mesh.uv[f[2]];
      const auto color = tex.sample(uv.x(), uv.y());
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = color[c];
    }
  }
  return out;
}

}  // namespace tryon
