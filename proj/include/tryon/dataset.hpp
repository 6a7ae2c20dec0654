#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tryon/densepose_prep.hpp"
#include "tryon/error.hpp"
#include "tryon/frame_source.hpp"
#include "tryon/image.hpp"
#include "tryon/measurement_garment.hpp"
#include "tryon/perception.hpp"

namespace tryon {

inline constexpr std::string_view kDatasetPipelineVersion = "tryon-dataset-1";

class EmptyDatasetError : public InputError {
 public:
  using InputError::InputError;
};

// ---------------------------------------------------------------------------
// Capture guidance

/// One guide pose. Arm angles describe the pose for both sides; a symmetric pose has equal
/// left and right values.
struct PoseDescriptor {
  std::string name;
  std::string guide_image;
  double duration_s = 0;
  double left_shoulder_deg = 0;
  double right_shoulder_deg = 0;
  double left_elbow_deg = 0;
  double right_elbow_deg = 0;

  bool symmetric() const {
    return left_shoulder_deg == right_shoulder_deg && left_elbow_deg == right_elbow_deg;
  }
};

struct CaptureProtocol {
  std::vector<PoseDescriptor> poses;
  double rotation_deg = 360.0;

  /// The fourteen symmetric poses, split uniformly over a two-minute session.
  static CaptureProtocol standard(double total_seconds = 120.0);
  /// Throws ConfigError unless there are exactly 14 symmetric poses with positive durations.
  void validate() const;
};

struct GuideEntry {
  int index = 0;
  std::string pose_name;
  std::string guide_image;
  double start_s = 0;
  double duration_s = 0;
  double rotation_deg = 360.0;
};

struct GuideScript {
  std::vector<GuideEntry> entries;
  double total_s = 0;

  nlohmann::json to_json() const;
};

GuideScript capture_session_guide(const CaptureProtocol& protocol);

// ---------------------------------------------------------------------------
// Dataset

struct DatasetRecord {
  std::uint64_t frame_id = 0;
  std::string vm_path;
  std::string sdp_path;
  std::string dp_path;
  std::string garment_path;
  std::string mask_path;
  RoiTransform roi;
  double pose_confidence = 0;
  bool touches_border = false;
};

struct SkippedFrame {
  std::uint64_t frame_id = 0;
  std::string reason;
};

struct DatasetBuildConfig {
  std::string garment_id = "garment";
  int working_short_side = 1024;
  int roi_side = 512;
  double roi_padding = 0.15;
  GridTexture grid;
  PartSet simplification_set = default_simplification_set();
  int workers = 1;

  nlohmann::json to_json() const;
  static DatasetBuildConfig from_json(const nlohmann::json& j);
};

struct DatasetManifest {
  std::string garment_id;
  std::vector<DatasetRecord> records;
  PartSet simplification_set;
  int capture_width = 0;
  int capture_height = 0;
  int working_width = 0;
  int working_height = 0;
  double fps = 0;
  std::uint64_t total_frames = 0;
  std::vector<SkippedFrame> skipped;
  std::string pipeline_version{kDatasetPipelineVersion};
  nlohmann::json build_config;
  std::string content_hash;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// Hash over the build config, every record entry and the bytes of every record file.
std::string compute_manifest_hash(const DatasetManifest& manifest, const std::filesystem::path& root);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& root);
DatasetManifest load_manifest(const std::filesystem::path& root);

using BackendFactory = std::function<PerceptionSet()>;

/// Processes every frame of `video` and writes `<out>/manifest.json` plus `<out>/frames/`.
/// Frames where any backend fails or finds nobody are skipped and listed in the manifest.
DatasetManifest build_dataset(FrameSource& video, const BackendFactory& backends,
                              const DatasetBuildConfig& config, const std::filesystem::path& out);

struct RecordCheck {
  std::uint64_t frame_id = 0;
  bool ok = true;
  std::vector<std::string> issues;
};

struct ValidationReport {
  std::vector<RecordCheck> records;
  std::vector<std::string> dataset_issues;

  bool ok() const;
  std::size_t failing() const;
  nlohmann::json to_json() const;
};

ValidationReport validate_dataset(const DatasetManifest& manifest, const std::filesystem::path& root);

nlohmann::json roi_to_json(const RoiTransform& roi);
RoiTransform roi_from_json(const nlohmann::json& j);

}  // namespace tryon
