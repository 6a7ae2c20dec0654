#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "tryon/frame_source.hpp"
#include "tryon/image.hpp"

namespace tryon {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean SSIM over all fully contained Gaussian windows. 3-channel inputs are compared on
/// Rec. 601 luma. Throws InputError on dimension mismatch or images smaller than the window.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// sum(mask * |pred - target|) / (channels * sum(mask)); 0 when the mask is empty.
double masked_l1(const Image& pred, const Image& target, const SoftMask& mask);

struct MetricReport {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::vector<double> per_frame;
  double mean = 0;
  double stddev = 0;

  static MetricReport from_values(std::string name, std::vector<double> values,
                                  nlohmann::json params = nlohmann::json::object());
  nlohmann::json to_json() const;
};

/// Moments of a feature distribution as supplied by a video feature backbone.
struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), via the symmetric form
/// (S1^(1/2) S2 S1^(1/2))^(1/2). Clamped at zero.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

/// Video-distribution feature backbone (I3D-style); none is bundled.
class VideoFeatureBackend {
 public:
  virtual ~VideoFeatureBackend() = default;
  virtual std::string name() const = 0;
  virtual GaussianMoments moments(const std::vector<Image>& frames) = 0;
};

/// Throws ConfigError when no backend is supplied.
double video_metric(const std::vector<Image>& frames_a, const std::vector<Image>& frames_b,
                    VideoFeatureBackend* backend);

/// Learned perceptual distance between two images (LPIPS-style); none is bundled.
class PerceptualMetricBackend {
 public:
  virtual ~PerceptualMetricBackend() = default;
  virtual std::string name() const = 0;
  virtual double distance(const Image& a, const Image& b) = 0;
};

struct VideoEvalOptions {
  std::vector<std::string> metrics{"ssim", "l1"};
  /// Resize both videos before comparison, e.g. 512x384 for cross-method tables.
  std::optional<std::pair<int, int>> compare_size;  // (width, height)
};

/// Frame-by-frame comparison of two equally long videos. Unknown metric names are a
/// ConfigError; length or size mismatches are InputError.
std::vector<MetricReport> evaluate_videos(FrameSource& pred, FrameSource& truth, const VideoEvalOptions& options);

}  // namespace tryon
