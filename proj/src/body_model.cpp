#include "tryon/body_model.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tryon/error.hpp"
#include "tryon/hashing.hpp"

namespace tryon {
namespace {

constexpr std::array<std::string_view, kNumJoints> kPartNames = {
    "hips",      "leftUpLeg",     "rightUpLeg",     "spine",       "leftLeg",      "rightLeg",
    "spine1",    "leftFoot",      "rightFoot",      "spine2",      "leftToeBase",  "rightToeBase",
    "neck",      "leftShoulder",  "rightShoulder",  "head",        "leftArm",      "rightArm",
    "leftForeArm", "rightForeArm", "leftHand",      "rightHand",   "leftHandIndex1", "rightHandIndex1"};

constexpr std::array<int, kNumJoints> kParents = {-1, 0,  0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                                  9,  9,  9,  12, 13, 14, 16, 17, 18, 19, 20, 21};

// Rest joint locations for the mean shape, metres, pelvis at the origin.
const std::array<Vec3, kNumJoints> kRestJoints = {
    Vec3(0, 0, 0),          Vec3(0.07, -0.09, 0),    Vec3(-0.07, -0.09, 0),
    Vec3(0, 0.10, 0),       Vec3(0.10, -0.48, 0),    Vec3(-0.10, -0.48, 0),
    Vec3(0, 0.23, 0),       Vec3(0.10, -0.88, -0.02), Vec3(-0.10, -0.88, -0.02),
    Vec3(0, 0.29, 0),       Vec3(0.11, -0.94, 0.10), Vec3(-0.11, -0.94, 0.10),
    Vec3(0, 0.50, -0.01),   Vec3(0.07, 0.41, 0),     Vec3(-0.07, 0.41, 0),
    Vec3(0, 0.57, 0.03),    Vec3(0.18, 0.44, 0),     Vec3(-0.18, 0.44, 0),
    Vec3(0.44, 0.44, 0),    Vec3(-0.44, 0.44, 0),    Vec3(0.69, 0.44, 0),
    Vec3(-0.69, 0.44, 0),   Vec3(0.77, 0.44, 0),     Vec3(-0.77, 0.44, 0)};

struct Segment {
  BodyPart part;
  Vec3 a;
  Vec3 b;
  double rx;  // cross-section radius along the first perpendicular axis
  double rz;  // along the second (front-facing) axis
  bool rounded;
  bool widens_with_torso;
};

std::vector<Segment> segments() {
  const auto& J = kRestJoints;
  auto J_ = [&](int j) { return J[static_cast<std::size_t>(j)]; };
  std::vector<Segment> s = {
      {BodyPart::Hips, {0, -0.12, 0}, {0, 0.05, 0}, 0.16, 0.10, false, true},
      {BodyPart::Spine, {0, 0.05, 0}, {0, 0.17, 0}, 0.145, 0.10, false, true},
      {BodyPart::Spine1, {0, 0.17, 0}, {0, 0.30, 0}, 0.15, 0.105, false, true},
      {BodyPart::Spine2, {0, 0.30, 0}, {0, 0.45, 0}, 0.17, 0.11, false, true},
      {BodyPart::Neck, {0, 0.45, -0.01}, {0, 0.55, 0}, 0.055, 0.055, false, false},
      {BodyPart::Head, {0, 0.62, 0.02}, {0, 0.70, 0.02}, 0.095, 0.095, true, false},
  };
  for (int side = 0; side < 2; ++side) {
    const int o = side;  // left joints precede right joints in SMPL order
    auto part = [&](BodyPart left) { return static_cast<BodyPart>(static_cast<int>(left) + o); };
    const double sx = side == 0 ? 1.0 : -1.0;
    s.push_back({part(BodyPart::LeftShoulder), J_(13 + o), J_(16 + o), 0.06, 0.06, true, false});
    s.push_back({part(BodyPart::LeftArm), J_(16 + o), J_(18 + o), 0.052, 0.052, true, false});
    s.push_back({part(BodyPart::LeftForeArm), J_(18 + o), J_(20 + o), 0.042, 0.042, true, false});
    s.push_back({part(BodyPart::LeftHand), J_(20 + o), J_(22 + o), 0.035, 0.035, true, false});
    s.push_back({part(BodyPart::LeftHandIndex1), J_(22 + o), J_(22 + o) + Vec3(0.08 * sx, 0, 0), 0.015,
                 0.015, true, false});
    s.push_back({part(BodyPart::LeftUpLeg), J_(1 + o), J_(4 + o), 0.075, 0.075, true, false});
    s.push_back({part(BodyPart::LeftLeg), J_(4 + o), J_(7 + o), 0.055, 0.055, true, false});
    s.push_back({part(BodyPart::LeftFoot), J_(7 + o), J_(10 + o), 0.045, 0.045, true, false});
    s.push_back({part(BodyPart::LeftToeBase), J_(10 + o), J_(10 + o) + Vec3(0, 0, 0.07), 0.03, 0.03,
                 true, false});
  }
  return s;
}

constexpr int kRadialSegments = 16;
constexpr int kCapRings = 3;

// Appends one closed capsule (or capped cylinder) to the mesh.
void append_segment(BodyMesh& mesh, const Segment& seg, double height_scale, double girth_scale,
                    double torso_scale) {
  const Vec3 a = seg.a * height_scale;
  const Vec3 b = seg.b * height_scale;
  const double rx = seg.rx * girth_scale * (seg.widens_with_torso ? torso_scale : 1.0);
  const double rz = seg.rz * girth_scale;
  const Vec3 d = (b - a).normalized();
  const double length = (b - a).norm();
  // Second axis faces the front of the body (+z) unless the segment itself points forward.
  Vec3 ref = std::abs(d.z()) > 0.9 ? Vec3(0, 1, 0) : Vec3(0, 0, 1);
  const Vec3 e2 = (ref - ref.dot(d) * d).normalized();
  const Vec3 e1 = e2.cross(d).normalized();
  const double circumference = 2 * std::numbers::pi * std::sqrt((rx * rx + rz * rz) / 2);
  const double cap = seg.rounded ? (rx + rz) / 2 : 0.0;
  const double total = length + 2 * cap;

  // Rings along the axis as (axial offset from a, radius factor).
  std::vector<std::pair<double, double>> rings;
  if (seg.rounded) {
    for (int k = kCapRings; k >= 1; --k) {
      const double phi = std::numbers::pi / 2 * k / (kCapRings + 1);
      rings.emplace_back(-cap * std::sin(phi), std::cos(phi));
    }
  }
  // Ring count from the unscaled segment so topology does not depend on shape.
  const int body_rings = std::max(2, static_cast<int>(std::ceil((seg.b - seg.a).norm() / 0.04)) + 1);
  for (int r = 0; r < body_rings; ++r) rings.emplace_back(length * r / (body_rings - 1), 1.0);
  if (seg.rounded) {
    for (int k = 1; k <= kCapRings; ++k) {
      const double phi = std::numbers::pi / 2 * k / (kCapRings + 1);
      rings.emplace_back(length + cap * std::sin(phi), std::cos(phi));
    }
  }

  auto push_vertex = [&](const Vec3& p, double u_frac, double axial, bool front) {
    mesh.vertices.push_back(p);
    mesh.vertex_part.push_back(seg.part);
    mesh.uv.emplace_back(u_frac * circumference * kTexelsPerMeter, (axial + cap) * kTexelsPerMeter);
    mesh.surface_uv.emplace_back(u_frac, std::clamp((axial + cap) / total, 0.0, 1.0));
    mesh.front.push_back(front);
  };

  const int first = static_cast<int>(mesh.vertices.size());
  const int cols = kRadialSegments + 1;
  for (const auto& [axial, factor] : rings) {
    for (int c = 0; c < cols; ++c) {
      const double u = static_cast<double>(c) / kRadialSegments;
      const double ang = 2 * std::numbers::pi * u;
      const Vec3 radial = std::cos(ang) * rx * e1 + std::sin(ang) * rz * e2;
      const Vec3 normal_dir = std::cos(ang) * e1 + std::sin(ang) * e2;
      push_vertex(a + axial * d + factor * radial, u, axial, normal_dir.z() > 1e-9);
    }
  }
  const int n_rings = static_cast<int>(rings.size());
  for (int r = 0; r + 1 < n_rings; ++r) {
    for (int c = 0; c < kRadialSegments; ++c) {
      const int i0 = first + r * cols + c;
      const int i1 = i0 + 1;
      const int i2 = i0 + cols;
      const int i3 = i2 + 1;
      mesh.faces.push_back({i0, i2, i1});
      mesh.faces.push_back({i1, i2, i3});
    }
  }
  // Close both ends with a fan around a pole vertex.
  const double start_axial = rings.front().first;
  const double end_axial = rings.back().first;
  const double start_pole = seg.rounded ? -cap : start_axial;
  const double end_pole = seg.rounded ? length + cap : end_axial;
  const int pole0 = static_cast<int>(mesh.vertices.size());
  push_vertex(a + start_pole * d, 0.5, start_pole, d.z() < 0);
  const int pole1 = static_cast<int>(mesh.vertices.size());
  push_vertex(a + end_pole * d, 0.5, end_pole, d.z() > 0);
  const int last_ring = first + (n_rings - 1) * cols;
  for (int c = 0; c < kRadialSegments; ++c) {
    mesh.faces.push_back({pole0, first + c + 1, first + c});
    mesh.faces.push_back({pole1, last_ring + c, last_ring + c + 1});
  }
}

Eigen::Matrix3d rodrigues(double x, double y, double z) {
  const double angle = std::sqrt(x * x + y * y + z * z);
  if (angle < 1e-12) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, Vec3(x, y, z) / angle).toRotationMatrix();
}

struct ShapeScales {
  double height;
  double girth;
  double torso;
};

ShapeScales shape_scales(const std::array<double, kNumShapeParams>& shape) {
  return {std::max(0.3, 1.0 + 0.05 * shape[0]), std::max(0.3, 1.0 + 0.08 * shape[1]),
          std::max(0.3, 1.0 + 0.05 * shape[2])};
}

}  // namespace

std::string_view part_name(BodyPart part) { return kPartNames[static_cast<std::size_t>(part)]; }

BodyPart part_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPartNames.size(); ++i)
    if (kPartNames[i] == name) return static_cast<BodyPart>(i);
  throw ConfigError("unknown body part '" + std::string(name) + "'");
}

int parent_joint(int joint) { return kParents.at(static_cast<std::size_t>(joint)); }

bool is_measurement_part(BodyPart part) {
  switch (part) {
    case BodyPart::Spine:
    case BodyPart::Spine1:
    case BodyPart::Spine2:
    case BodyPart::Neck:
    case BodyPart::LeftShoulder:
    case BodyPart::RightShoulder:
    case BodyPart::LeftArm:
    case BodyPart::RightArm:
    case BodyPart::LeftForeArm:
    case BodyPart::RightForeArm:
      return true;
    default:
      return false;
  }
}

bool BodyPoseEstimate::valid() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(pose.begin(), pose.end(), finite) && std::all_of(shape.begin(), shape.end(), finite) &&
         std::isfinite(camera.scale) && camera.scale > 0 && std::isfinite(camera.tx) &&
         std::isfinite(camera.ty) && confidence >= 0 && confidence <= 1;
}

std::array<double, kNumPoseParams> t_pose() { return {}; }

std::array<double, kNumPoseParams> canonical_pose() {
  std::array<double, kNumPoseParams> pose{};
  // Shoulders lower the arms by ~55 degrees about the body's z axis.
  pose[16 * 3 + 2] = -0.95;
  pose[17 * 3 + 2] = 0.95;
  // Slight elbow flexion.
  pose[18 * 3 + 1] = -0.15;
  pose[19 * 3 + 1] = 0.15;
  return pose;
}

BodyModel::BodyModel() { template_ = build_rest({}); }

const BodyModel& BodyModel::standard() {
  static const BodyModel model;
  return model;
}

BodyMesh BodyModel::build_rest(const std::array<double, kNumShapeParams>& shape) const {
  const auto s = shape_scales(shape);
  BodyMesh mesh;
  for (const auto& seg : segments()) append_segment(mesh, seg, s.height, s.girth, s.torso);
  return mesh;
}

std::array<Vec3, kNumJoints> BodyModel::rest_joints(const std::array<double, kNumShapeParams>& shape) const {
  const auto s = shape_scales(shape);
  std::array<Vec3, kNumJoints> joints;
  for (int j = 0; j < kNumJoints; ++j) joints[j] = kRestJoints[j] * s.height;
  return joints;
}

BodyMesh BodyModel::posed(const std::array<double, kNumShapeParams>& shape,
                          const std::array<double, kNumPoseParams>& pose) const {
  BodyMesh mesh = build_rest(shape);
  const auto J = rest_joints(shape);
  std::array<Eigen::Matrix3d, kNumJoints> rot;
  std::array<Vec3, kNumJoints> trans;
  for (int j = 0; j < kNumJoints; ++j) {
    const Eigen::Matrix3d local = rodrigues(pose[j * 3], pose[j * 3 + 1], pose[j * 3 + 2]);
    const int p = kParents[j];
    if (p < 0) {
      rot[j] = local;
      trans[j] = J[j];
    } else {
      rot[j] = rot[p] * local;
      trans[j] = rot[p] * (J[j] - J[p]) + trans[p];
    }
  }
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const int j = static_cast<int>(mesh.vertex_part[v]);
    mesh.vertices[v] = rot[j] * (mesh.vertices[v] - J[j]) + trans[j];
  }
  return mesh;
}

std::string PartLabelTable::compute_checksum() const {
  std::ostringstream os;
  os << version << '\n';
  for (const auto& n : part_names) os << n << ',';
  os << '\n';
  for (int p : vertex_part) os << p << ',';
  return sha256_hex(os.str());
}

void PartLabelTable::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["version"] = version;
  j["parts"] = part_names;
  j["vertex_part"] = vertex_part;
  j["checksum"] = checksum;
  std::ofstream(path) << j.dump() << "\n";
}

PartLabelTable PartLabelTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("part label table not found: " + path.string());
  PartLabelTable t;
  try {
    const auto j = nlohmann::json::parse(in);
    t.version = j.at("version").get<std::string>();
    t.part_names = j.at("parts").get<std::vector<std::string>>();
    t.vertex_part = j.at("vertex_part").get<std::vector<int>>();
    t.checksum = j.at("checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed part label table " + path.string() + ": " + e.what());
  }
  if (t.compute_checksum() != t.checksum)
    throw ConfigError("part label table checksum mismatch: " + path.string());
  for (int p : t.vertex_part)
    if (p < 0 || p >= static_cast<int>(t.part_names.size()))
      throw ConfigError("part label table references unknown part");
  return t;
}

PartLabelTable PartLabelTable::from_model(const BodyModel& model) {
  PartLabelTable t;
  t.version = "procedural-body-1";
  for (auto name : kPartNames) t.part_names.emplace_back(name);
  for (auto p : model.vertex_parts()) t.vertex_part.push_back(static_cast<int>(p));
  t.checksum = t.compute_checksum();
  return t;
}

std::filesystem::path data_directory() {
  if (const char* env = std::getenv("TRYON_DATA_DIR"); env && *env) return env;
#ifdef TRYON_DATA_DIR
  return TRYON_DATA_DIR;
#else
  return "data";
#endif
}

const PartLabelTable& PartLabelTable::bundled() {
  static const PartLabelTable table = [] {
    auto t = load(data_directory() / "body_part_labels.json");
    if (t.vertex_part.size() != BodyModel::standard().vertex_count())
      throw ConfigError("part label table does not match the body model vertex count");
    return t;
  }();
  return table;
}

}  // namespace tryon
