#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace tryon {

inline constexpr int kNumJoints = 24;
inline constexpr int kNumShapeParams = 10;
inline constexpr int kNumPoseParams = 72;
/// Texture coordinates are stored in texels; this fixes their physical density.
inline constexpr double kTexelsPerMeter = 256.0;

/// SMPL joint order. Body parts share the index of the joint that drives them.
enum class BodyPart : int {
  Hips = 0, LeftUpLeg, RightUpLeg, Spine, LeftLeg, RightLeg, Spine1, LeftFoot, RightFoot,
  Spine2, LeftToeBase, RightToeBase, Neck, LeftShoulder, RightShoulder, Head, LeftArm,
  RightArm, LeftForeArm, RightForeArm, LeftHand, RightHand, LeftHandIndex1, RightHandIndex1
};

std::string_view part_name(BodyPart part);
BodyPart part_from_name(std::string_view name);
int parent_joint(int joint);

/// Parts kept on the virtual measurement garment: torso, neck base, collars, full arms.
bool is_measurement_part(BodyPart part);

/// Weak-perspective camera: pixel = (scale * X + tx, -scale * Y + ty). The camera sits at
/// z = depth looking down -z; geometry at z >= depth is behind it.
struct WeakPerspectiveCamera {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  double depth = 10.0;

  bool operator==(const WeakPerspectiveCamera&) const = default;
};

/// Parametric body estimate: SMPL shape (beta), axis-angle pose (theta) and camera.
struct BodyPoseEstimate {
  std::array<double, kNumShapeParams> shape{};
  std::array<double, kNumPoseParams> pose{};
  WeakPerspectiveCamera camera;
  double confidence = 1.0;

  bool valid() const;
  bool operator==(const BodyPoseEstimate&) const = default;
};

/// Relaxed standing pose with arms lowered, used as the stub estimator's output.
std::array<double, kNumPoseParams> canonical_pose();
std::array<double, kNumPoseParams> t_pose();

using Vec3 = Eigen::Vector3d;

/// A posed triangle mesh with per-vertex part labels and texel-space UVs.
struct BodyMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<BodyPart> vertex_part;
  std::vector<Eigen::Vector2d> uv;          // texels
  std::vector<Eigen::Vector2d> surface_uv;  // per-part surface coordinates in [0,1]
  std::vector<bool> front;                  // vertex faces the front of the body at rest
};

/// Procedural body built from capsules around an SMPL-style 24-joint skeleton. Topology is
/// fixed; shape parameters change joint placement and limb girth only.
class BodyModel {
 public:
  static const BodyModel& standard();

  std::size_t vertex_count() const { return template_.vertices.size(); }
  std::size_t face_count() const { return template_.faces.size(); }
  const std::vector<BodyPart>& vertex_parts() const { return template_.vertex_part; }
  const std::vector<std::array<int, 3>>& faces() const { return template_.faces; }

  std::array<Vec3, kNumJoints> rest_joints(const std::array<double, kNumShapeParams>& shape) const;
  /// Full posed mesh for the given parameters (vertices in metres, Y up, Z towards camera).
  BodyMesh posed(const std::array<double, kNumShapeParams>& shape,
                 const std::array<double, kNumPoseParams>& pose) const;

 private:
  BodyModel();
  BodyMesh build_rest(const std::array<double, kNumShapeParams>& shape) const;

  BodyMesh template_;
};

/// Versioned vertex-index -> part-name table with a checksum over its contents.
struct PartLabelTable {
  std::string version;
  std::vector<std::string> part_names;  // index -> name
  std::vector<int> vertex_part;         // vertex -> index into part_names
  std::string checksum;

  std::string compute_checksum() const;
  void save(const std::filesystem::path& path) const;
  /// Loads and verifies the checksum; throws ConfigError on mismatch.
  static PartLabelTable load(const std::filesystem::path& path);
  static PartLabelTable from_model(const BodyModel& model);
  /// Table shipped in the data directory (TRYON_DATA_DIR overrides the built-in path).
  static const PartLabelTable& bundled();
};

std::filesystem::path data_directory();

}  // namespace tryon
