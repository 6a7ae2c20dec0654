#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tryon/checkpoint.hpp"
#include "tryon/dataset.hpp"
#include "tryon/gsnet.hpp"

namespace tryon {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  int roi_side = 512;
  RepresentationMode mode = RepresentationMode::Hybrid;
  std::uint64_t seed = 0;

  /// "production" or "tiny" network preset.
  std::string arch = "production";
  nn::GanMode gan = nn::GanMode::Log;
  /// "identity", "none", or a path to VGG19 trunk weights.
  std::string perceptual = "identity";
  bool augment = true;
  AffineJitterRanges jitter;
  /// When > 0, stop after this many steps instead of after `epochs`.
  long long max_steps = 0;
  /// Fraction of the run after which the learning rate decays linearly to zero.
  double decay_start = 0.5;
  double holdout_fraction = 0.05;
  /// Evaluate on the holdout at the end of every epoch.
  bool eval_each_epoch = true;

  /// Throws ConfigError on non-positive or inconsistent values.
  void validate() const;
  nlohmann::json to_json() const;
  /// Fields missing from `j` keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

/// Network input and target for one record.
struct TrainingPair {
  Image x;  // mode channels
  Image y;  // garment (3) + mask (1)
};

/// Reads the record's images, resamples them to roi_side if needed and, when `jitter_seed`
/// is set, applies one shared random affine to every image. Throws InputError if a file is
/// unreadable.
TrainingPair make_training_pair(const DatasetRecord& record, const std::filesystem::path& root,
                                RepresentationMode mode, std::optional<std::uint64_t> jitter_seed,
                                const AffineJitterRanges& ranges = {}, int roi_side = 0);

struct HoldoutSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> holdout;
};

/// The last `fraction` of records by frame_id (at least one when fraction > 0 and there are
/// two or more records) form the holdout.
HoldoutSplit split_holdout(const std::vector<DatasetRecord>& records, double fraction);

struct EvalSummary {
  std::size_t count = 0;
  double masked_l1 = 0;
  double ssim = 0;
  nlohmann::json to_json() const;
};

/// Predicts garment and mask from a network input.
using GarmentPredictor = std::function<GsOutput(const Image& x)>;

/// Masked L1 and SSIM of (garment * predicted mask) against the stored garment, with the
/// stored mask as weight. Throws ConfigError on an empty holdout.
EvalSummary evaluate_holdout(const GarmentPredictor& predict, const std::vector<DatasetRecord>& holdout,
                             const std::filesystem::path& root, RepresentationMode mode, int roi_side = 0);

struct StepResult {
  long long step = 0;
  int epoch = 0;
  double lr = 0;
  nn::LossBreakdown losses;
};

/// Alternating discriminator / generator optimisation over one dataset.
class Trainer {
 public:
  /// `out_dir` receives checkpoints and run.jsonl; empty disables both.
  Trainer(DatasetManifest manifest, std::filesystem::path dataset_root, TrainConfig config,
          std::filesystem::path out_dir = {});
  ~Trainer();

  /// Continues a run from a checkpoint written by save().
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint, DatasetManifest manifest,
                                         std::filesystem::path dataset_root, std::filesystem::path out_dir = {});

  StepResult step();
  /// Runs to completion; returns the final checkpoint path (empty without out_dir).
  std::filesystem::path run();

  EvalSummary evaluate(const std::vector<DatasetRecord>& records);
  EvalSummary evaluate_holdout_split() { return evaluate(split_.holdout); }

  void save(const std::filesystem::path& path, bool final = false);

  bool done() const { return step_ >= total_steps_; }
  long long step_count() const { return step_; }
  long long total_steps() const { return total_steps_; }
  int epoch() const { return static_cast<int>(step_ / steps_per_epoch_); }
  int steps_per_epoch() const { return static_cast<int>(steps_per_epoch_); }
  double learning_rate_at(long long step) const;

  const TrainConfig& config() const { return config_; }
  const HoldoutSplit& split() const { return split_; }
  GsNetwork& network() { return *net_; }
  const nlohmann::json& loss_averages() const { return ema_; }

 private:
  struct Cache;
  Trainer(DatasetManifest manifest, std::filesystem::path dataset_root, TrainConfig config,
          std::filesystem::path out_dir, std::unique_ptr<GsNetwork> net);
  void init();
  TrainingPair load_pair(std::size_t train_index, std::optional<std::uint64_t> jitter_seed);
  std::vector<std::size_t> epoch_order(int epoch) const;
  void log_line(const nlohmann::json& j);
  [[noreturn]] void diverged(const StepResult& r);

  DatasetManifest manifest_;
  std::filesystem::path root_;
  TrainConfig config_;
  std::filesystem::path out_;
  std::unique_ptr<GsNetwork> net_;
  std::unique_ptr<nn::Adam<float>> gen_opt_;
  std::unique_ptr<nn::Adam<float>> disc_opt_;
  std::unique_ptr<nn::FeatureExtractor<float>> extractor_;
  HoldoutSplit split_;
  long long step_ = 0;
  long long steps_per_epoch_ = 1;
  long long total_steps_ = 0;
  nlohmann::json ema_ = nlohmann::json::object();
  std::unique_ptr<Cache> cache_;
  std::ofstream log_;
};

}  // namespace tryon
