#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tryon/densepose_prep.hpp"
#include "tryon/frame_queue.hpp"
#include "tryon/frame_source.hpp"
#include "tryon/gsnet.hpp"
#include "tryon/measurement_garment.hpp"
#include "tryon/perception.hpp"

namespace tryon {

// ---------------------------------------------------------------------------
// Garments

/// Maps a network input (ROI-sized, mode channels) to garment and mask.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual RepresentationMode mode() const = 0;
  virtual int roi_side() const = 0;
  virtual GsOutput synthesize(const Image& x) = 0;
};

class NetworkSynthesizer : public Synthesizer {
 public:
  NetworkSynthesizer(std::shared_ptr<GsNetwork> net, int roi_side);
  RepresentationMode mode() const override { return net_->mode(); }
  int roi_side() const override { return roi_side_; }
  GsOutput synthesize(const Image& x) override { return net_->forward(x); }
  GsNetwork& network() { return *net_; }

 private:
  std::shared_ptr<GsNetwork> net_;
  int roi_side_;
};

/// Emits a constant colour and constant mask value: a colour probe for pipeline tests.
/// Rejects inputs whose channel count does not match its mode, like a real checkpoint.
class ConstantSynthesizer : public Synthesizer {
 public:
  ConstantSynthesizer(std::array<float, 3> color, float mask_value, RepresentationMode mode = RepresentationMode::Hybrid,
                      int roi_side = 64);
  RepresentationMode mode() const override { return mode_; }
  int roi_side() const override { return roi_side_; }
  GsOutput synthesize(const Image& x) override;

  /// Called with every input before synthesis (test hook: delays, probes).
  std::function<void(const Image&)> on_synthesize;

 private:
  std::array<float, 3> color_;
  float mask_;
  RepresentationMode mode_;
  int roi_side_;
};

struct GarmentCatalogEntry {
  std::string garment_id;
  std::filesystem::path checkpoint;  // empty for probe garments
  std::filesystem::path preview;
  RepresentationMode mode = RepresentationMode::Hybrid;
  PartSet simplification_set = default_simplification_set();
  int roi_side = 512;

  nlohmann::json to_json() const;
};

struct LoadedGarment {
  GarmentCatalogEntry entry;
  std::shared_ptr<Synthesizer> synthesizer;
};

/// Loads one trained checkpoint as a garment; roi_side comes from the checkpoint's training
/// config unless given.
LoadedGarment load_garment_checkpoint(const std::filesystem::path& checkpoint, std::string garment_id,
                                      std::optional<int> roi_side = std::nullopt);

class GarmentCatalog {
 public:
  /// Loads `<dir>/catalog.json`:
  ///   {"garments": [{"garment_id", "checkpoint" | "probe": {"color", "mask"},
  ///                  "preview"?, "roi_side"?, "simplification_set"?, "mode"?}]}
  /// Paths are relative to `dir`. Throws ConfigError when a checkpoint's mode stamp
  /// disagrees with the entry.
  static GarmentCatalog load(const std::filesystem::path& dir);

  void add(GarmentCatalogEntry entry, std::shared_ptr<Synthesizer> synthesizer);
  std::shared_ptr<const LoadedGarment> find(const std::string& garment_id) const;
  std::vector<std::shared_ptr<const LoadedGarment>> entries() const { return ordered_; }
  bool empty() const { return ordered_.empty(); }
  nlohmann::json to_json() const;

 private:
  std::vector<std::shared_ptr<const LoadedGarment>> ordered_;
};

/// Thread-safe current-garment selection. The swap is atomic; readers bind a whole entry.
class GarmentSelection {
 public:
  explicit GarmentSelection(const GarmentCatalog& catalog);
  /// Throws InputError for an unknown id.
  void select(const std::string& garment_id);
  std::shared_ptr<const LoadedGarment> current() const;

 private:
  const GarmentCatalog& catalog_;
  mutable std::mutex mu_;
  std::shared_ptr<const LoadedGarment> current_;
};

// ---------------------------------------------------------------------------
// Per-frame pipeline

struct StageLatency {
  double pose_ms = 0;
  double densepose_ms = 0;
  double gs_ms = 0;
  double composite_ms = 0;

  double sum() const { return pose_ms + densepose_ms + gs_ms + composite_ms; }
  nlohmann::json to_json() const;
};

struct TryOnFrameResult {
  std::uint64_t frame_id = 0;
  Image output;
  StageLatency latency;
  bool passthrough = false;
  std::string garment_id;
  /// Mask actually composited, full frame (empty on passthrough).
  SoftMask mask;
};

/// Full-frame, garment-independent perception output.
struct PersonState {
  Image vm;  // measurement garment render
  Image dp;  // encoded DensePose
  BoundingBox bbox;
};

struct Perceived {
  Frame frame;
  std::optional<PersonState> person;  // nullopt => passthrough
  StageLatency latency;
};

struct PipelineOptions {
  double roi_padding = 0.15;
  GridTexture grid;
  /// Consecutive backend failures bridged by repeating the last good representation.
  int failure_grace_frames = 5;
};

/// Frame -> perception -> ROI + GS -> inverse ROI + composite. Perception keeps the
/// failure-grace state, so one instance serves one stream.
class InferencePipeline {
 public:
  InferencePipeline(PerceptionSet backends, PipelineOptions options = {});

  /// Output of the GS stage, before compositing.
  struct Synthesized {
    Perceived perceived;
    std::string garment_id;
    std::optional<GsOutput> output;  // nullopt => passthrough
    RoiTransform roi;
  };

  Perceived perceive(Frame frame);
  /// Builds the garment's representation and synthesises; pure with respect to `this`.
  Synthesized gs_stage(Perceived p, const LoadedGarment& garment) const;
  static TryOnFrameResult composite_stage(Synthesized s);
  /// gs_stage followed by composite_stage.
  TryOnFrameResult synthesize(const Perceived& p, const LoadedGarment& garment);
  /// Sequential convenience: perceive then synthesize.
  TryOnFrameResult tryon_frame(const Frame& frame, const LoadedGarment& garment);

  /// ROI-sized network input for the given mode (exposed for tests).
  static HybridRepresentation build_representation(const PersonState& person, const RoiTransform& roi,
                                                   RepresentationMode mode, const PartSet& simplification_set);
  RoiTransform roi_for(const PersonState& person, int roi_side) const;

 private:
  PerceptionSet backends_;
  PipelineOptions options_;
  std::optional<PersonState> last_good_;
  int consecutive_failures_ = 0;
};

// ---------------------------------------------------------------------------
// Sessions

struct FpsReport {
  double fps = 0;
  std::uint64_t frames = 0;   // results emitted so far
  std::uint64_t dropped = 0;  // frames dropped by live backpressure
  StageLatency mean_latency;
  std::string garment_id;
  nlohmann::json to_json() const;
};

/// Shared, thread-safe session statistics (backs the service's /stats).
class SessionStats {
 public:
  void record(const TryOnFrameResult& r);
  void set_dropped(std::uint64_t d);
  /// Rolls the one-second window if due; returns a report when it rolled.
  std::optional<FpsReport> maybe_roll(std::chrono::steady_clock::time_point now);
  FpsReport snapshot() const;

 private:
  mutable std::mutex mu_;
  std::chrono::steady_clock::time_point window_start_ = std::chrono::steady_clock::now();
  std::uint64_t window_frames_ = 0;
  StageLatency window_sum_;
  FpsReport last_;
  std::uint64_t total_ = 0;
};

struct SessionOptions {
  /// Live: depth-2 drop-oldest queues. Offline: unbounded, nothing dropped.
  bool live = false;
  std::size_t queue_depth = 2;
  PipelineOptions pipeline;
  std::function<void(const FpsReport&)> on_fps;
  /// Called right after a frame has been bound to a garment at the GS stage.
  std::function<void(std::uint64_t frame_id, const std::string& garment_id)> on_bind;
  std::shared_ptr<SessionStats> stats;
  /// Cooperative stop flag; the session ends after in-flight frames drain.
  std::shared_ptr<std::atomic<bool>> stop;
};

struct SessionSummary {
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t dropped = 0;
  double wall_seconds = 0;
};

/// Runs ingest, perception, GS and composite as concurrent stages. Results reach `sink` in
/// strictly increasing frame order. Throws ConfigError on an empty catalog.
SessionSummary run_session(FrameSource& source, PerceptionSet backends, GarmentSelection& selection,
                           const std::function<void(TryOnFrameResult)>& sink, const SessionOptions& options = {});

struct InferVideoSummary {
  std::uint64_t frames = 0;
  double wall_seconds = 0;
  double fps = 0;
  StageLatency mean_latency;
  std::uint64_t passthrough = 0;
  nlohmann::json to_json() const;
};

/// Offline inference over a frame directory; writes the output frames to `output` and
/// per-frame latencies to `<output>/latency.json`.
InferVideoSummary infer_video(const std::filesystem::path& input, const LoadedGarment& garment,
                              const std::filesystem::path& output, PerceptionSet backends,
                              const PipelineOptions& options = {});

/// Same, from an in-memory source, without writing anything unless `output` is set.
InferVideoSummary infer_frames(FrameSource& source, const LoadedGarment& garment, PerceptionSet backends,
                               const std::function<void(const TryOnFrameResult&)>& on_result = {},
                               const PipelineOptions& options = {});

}  // namespace tryon
