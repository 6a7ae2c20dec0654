#include "tryon/engine.hpp"

#include <exception>
#include <fstream>
#include <thread>

#include "tryon/checkpoint.hpp"
#include "tryon/error.hpp"
#include "tryon/log.hpp"
#include "tryon/png_io.hpp"

namespace tryon {
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

StageLatency& operator+=(StageLatency& a, const StageLatency& b) {
  a.pose_ms += b.pose_ms;
  a.densepose_ms += b.densepose_ms;
  a.gs_ms += b.gs_ms;
  a.composite_ms += b.composite_ms;
  return a;
}

StageLatency scaled(StageLatency a, double f) {
  a.pose_ms *= f;
  a.densepose_ms *= f;
  a.gs_ms *= f;
  a.composite_ms *= f;
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Garments

NetworkSynthesizer::NetworkSynthesizer(std::shared_ptr<GsNetwork> net, int roi_side)
    : net_(std::move(net)), roi_side_(roi_side) {}

ConstantSynthesizer::ConstantSynthesizer(std::array<float, 3> color, float mask_value, RepresentationMode mode,
                                         int roi_side)
    : color_(color), mask_(mask_value), mode_(mode), roi_side_(roi_side) {}

GsOutput ConstantSynthesizer::synthesize(const Image& x) {
  if (x.channels() != channels_for(mode_))
    throw InputError("probe garment for mode " + std::string(to_string(mode_)) + " got " +
                     std::to_string(x.channels()) + " channels");
  if (on_synthesize) on_synthesize(x);
  GsOutput out{Image(3, x.height(), x.width()), SoftMask(x.height(), x.width(), mask_)};
  for (int c = 0; c < 3; ++c) std::fill(out.garment.plane(c).begin(), out.garment.plane(c).end(), color_[c]);
  return out;
}

json GarmentCatalogEntry::to_json() const {
  return {{"garment_id", garment_id},
          {"checkpoint", checkpoint.string()},
          {"preview", preview.string()},
          {"mode", std::string(to_string(mode))},
          {"simplification_set", simplification_set.to_vector()},
          {"roi_side", roi_side}};
}

LoadedGarment load_garment_checkpoint(const fs::path& checkpoint, std::string garment_id, std::optional<int> roi_side) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  LoadedGarment g;
  g.entry.garment_id = std::move(garment_id);
  g.entry.checkpoint = checkpoint;
  g.entry.mode = ck.network->mode();
  int side = 512;
  if (ck.stamp.state.contains("train_config")) side = ck.stamp.state["train_config"].value("roi_side", side);
  g.entry.roi_side = roi_side.value_or(side);
  g.synthesizer = std::make_shared<NetworkSynthesizer>(std::shared_ptr<GsNetwork>(std::move(ck.network)), g.entry.roi_side);
  return g;
}

GarmentCatalog GarmentCatalog::load(const fs::path& dir) {
  const fs::path file = dir / "catalog.json";
  std::ifstream in(file);
  if (!in) throw InputError("cannot read garment catalog " + file.string());
  GarmentCatalog cat;
  try {
    const json j = json::parse(in);
    for (const auto& g : j.at("garments")) {
      GarmentCatalogEntry e;
      e.garment_id = g.at("garment_id").get<std::string>();
      if (g.contains("preview")) e.preview = dir / g.at("preview").get<std::string>();
      if (g.contains("simplification_set")) e.simplification_set = PartSet(g.at("simplification_set").get<std::vector<int>>());
      std::optional<RepresentationMode> declared;
      if (g.contains("mode")) declared = parse_mode(g.at("mode").get<std::string>());
      std::shared_ptr<Synthesizer> synth;
      if (g.contains("probe")) {
        const auto& p = g.at("probe");
        e.mode = declared.value_or(RepresentationMode::Hybrid);
        e.roi_side = g.value("roi_side", 64);
        synth = std::make_shared<ConstantSynthesizer>(p.at("color").get<std::array<float, 3>>(),
                                                      p.value("mask", 1.0f), e.mode, e.roi_side);
      } else {
        std::optional<int> side;
        if (g.contains("roi_side")) side = g.at("roi_side").get<int>();
        auto loaded = load_garment_checkpoint(dir / g.at("checkpoint").get<std::string>(), e.garment_id, side);
        e.checkpoint = loaded.entry.checkpoint;
        e.mode = loaded.entry.mode;
        e.roi_side = loaded.entry.roi_side;
        if (declared && *declared != e.mode)
          throw ConfigError("garment " + e.garment_id + " declares mode " + std::string(to_string(*declared)) +
                            " but its checkpoint is stamped " + std::string(to_string(e.mode)));
        synth = std::move(loaded.synthesizer);
      }
      cat.add(std::move(e), std::move(synth));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed garment catalog " + file.string() + ": " + e.what());
  }
  if (cat.empty()) throw ConfigError("garment catalog " + file.string() + " is empty");
  return cat;
}

void GarmentCatalog::add(GarmentCatalogEntry entry, std::shared_ptr<Synthesizer> synthesizer) {
  if (find(entry.garment_id)) throw ConfigError("duplicate garment id " + entry.garment_id);
  if (synthesizer->mode() != entry.mode) throw ConfigError("garment " + entry.garment_id + ": mode stamp mismatch");
  ordered_.push_back(std::make_shared<const LoadedGarment>(LoadedGarment{std::move(entry), std::move(synthesizer)}));
}

std::shared_ptr<const LoadedGarment> GarmentCatalog::find(const std::string& id) const {
  for (const auto& g : ordered_)
    if (g->entry.garment_id == id) return g;
  return nullptr;
}

json GarmentCatalog::to_json() const {
  json arr = json::array();
  for (const auto& g : ordered_) arr.push_back(g->entry.to_json());
  return arr;
}

GarmentSelection::GarmentSelection(const GarmentCatalog& catalog) : catalog_(catalog) {
  if (catalog.empty()) throw ConfigError("garment catalog is empty");
  current_ = catalog.entries().front();
}

void GarmentSelection::select(const std::string& id) {
  auto g = catalog_.find(id);
  if (!g) throw InputError("unknown garment id '" + id + "'");
  std::lock_guard lock(mu_);
  current_ = std::move(g);
}

std::shared_ptr<const LoadedGarment> GarmentSelection::current() const {
  std::lock_guard lock(mu_);
  return current_;
}

// ---------------------------------------------------------------------------
// Pipeline

json StageLatency::to_json() const {
  return {{"pose_ms", pose_ms}, {"densepose_ms", densepose_ms}, {"gs_ms", gs_ms}, {"composite_ms", composite_ms}};
}

InferencePipeline::InferencePipeline(PerceptionSet backends, PipelineOptions options)
    : backends_(std::move(backends)), options_(std::move(options)) {
  backends_.require_available();
}

Perceived InferencePipeline::perceive(Frame frame) {
  Perceived p;
  const auto& img = frame.image;
  try {
    auto t0 = Clock::now();
    const auto pose = backends_.pose->estimate_pose(img, frame.id);
    std::optional<PersonState> person;
    if (pose) {
      person.emplace();
      person->vm = render_measurement_garment(trim_smpl(*pose), options_.grid, pose->camera, img.height(), img.width());
    }
    p.latency.pose_ms = ms_since(t0);
    if (person) {
      t0 = Clock::now();
      const auto dp = backends_.densepose->estimate_densepose(img, frame.id);
      const auto bbox = dp ? upper_body_bbox(*dp) : std::nullopt;
      if (bbox) {
        person->dp = encode_iuv(*dp);
        person->bbox = *bbox;
      } else {
        person.reset();
      }
      p.latency.densepose_ms = ms_since(t0);
    }
    p.person = person;
    last_good_ = person;
    consecutive_failures_ = 0;
  } catch (const BackendError& e) {
    ++consecutive_failures_;
    if (last_good_ && consecutive_failures_ <= options_.failure_grace_frames) {
      p.person = last_good_;
      log(LogLevel::Info, "frame " + std::to_string(frame.id) + ": backend failure, repeating previous representation");
    } else {
      log(LogLevel::Warn, "frame " + std::to_string(frame.id) + ": backend failure, passthrough: " + e.what());
    }
  }
  p.frame = std::move(frame);
  return p;
}

RoiTransform InferencePipeline::roi_for(const PersonState& person, int roi_side) const {
  return roi_from_bbox(person.bbox, options_.roi_padding, roi_side);
}

HybridRepresentation InferencePipeline::build_representation(const PersonState& person, const RoiTransform& roi,
                                                             RepresentationMode mode, const PartSet& set) {
  const Image vm = roi_extract(person.vm, roi, Interpolation::Bilinear);
  const Image dp = roi_extract(person.dp, roi, Interpolation::Nearest);
  HybridRepresentation rep;
  rep.mode = mode;
  switch (mode) {
    case RepresentationMode::Hybrid: rep.data = concat_channels(vm, simplify(dp, set).data); break;
    case RepresentationMode::VM: rep.data = vm; break;
    case RepresentationMode::VMDP: rep.data = concat_channels(vm, dp); break;
    case RepresentationMode::SDP: rep.data = simplify(dp, set).data; break;
  }
  return rep;
}

InferencePipeline::Synthesized InferencePipeline::gs_stage(Perceived p, const LoadedGarment& garment) const {
  Synthesized s;
  s.garment_id = garment.entry.garment_id;
  if (p.person) {
    const auto t0 = Clock::now();
    s.roi = roi_for(*p.person, garment.synthesizer->roi_side());
    const auto rep = build_representation(*p.person, s.roi, garment.entry.mode, garment.entry.simplification_set);
    s.output = garment.synthesizer->synthesize(rep.data);
    p.latency.gs_ms = ms_since(t0);
  }
  s.perceived = std::move(p);
  return s;
}

TryOnFrameResult InferencePipeline::composite_stage(Synthesized s) {
  TryOnFrameResult r;
  r.frame_id = s.perceived.frame.id;
  r.garment_id = s.garment_id;
  r.latency = s.perceived.latency;
  const Image& in = s.perceived.frame.image;
  if (!s.output) {
    r.passthrough = true;
    r.output = in;
    return r;
  }
  const auto t0 = Clock::now();
  const Image garment = roi_inverse(s.output->garment, s.roi, in.height(), in.width(), Interpolation::Bilinear);
  r.mask = roi_inverse(s.output->mask, s.roi, in.height(), in.width(), Interpolation::Bilinear);
  r.output = composite(in, garment, r.mask);
  r.latency.composite_ms = ms_since(t0);
  return r;
}

TryOnFrameResult InferencePipeline::synthesize(const Perceived& p, const LoadedGarment& garment) {
  return composite_stage(gs_stage(p, garment));
}

TryOnFrameResult InferencePipeline::tryon_frame(const Frame& frame, const LoadedGarment& garment) {
  return synthesize(perceive(frame), garment);
}

// ---------------------------------------------------------------------------
// Sessions

json FpsReport::to_json() const {
  return {{"fps", fps}, {"frames", frames}, {"dropped", dropped}, {"latency", mean_latency.to_json()},
          {"garment_id", garment_id}};
}

void SessionStats::record(const TryOnFrameResult& r) {
  std::lock_guard lock(mu_);
  ++window_frames_;
  ++total_;
  window_sum_ += r.latency;
  last_.garment_id = r.garment_id;
}

void SessionStats::set_dropped(std::uint64_t d) {
  std::lock_guard lock(mu_);
  last_.dropped = d;
}

std::optional<FpsReport> SessionStats::maybe_roll(Clock::time_point now) {
  std::lock_guard lock(mu_);
  const double elapsed = std::chrono::duration<double>(now - window_start_).count();
  if (elapsed < 1.0) return std::nullopt;
  last_.fps = window_frames_ / elapsed;
  last_.frames = total_;
  last_.mean_latency = window_frames_ ? scaled(window_sum_, 1.0 / window_frames_) : StageLatency{};
  window_start_ = now;
  window_frames_ = 0;
  window_sum_ = {};
  return last_;
}

FpsReport SessionStats::snapshot() const {
  std::lock_guard lock(mu_);
  FpsReport r = last_;
  r.frames = total_;
  return r;
}

SessionSummary run_session(FrameSource& source, PerceptionSet backends, GarmentSelection& selection,
                           const std::function<void(TryOnFrameResult)>& sink, const SessionOptions& options) {
  InferencePipeline pipeline(std::move(backends), options.pipeline);
  const std::size_t depth = options.live ? options.queue_depth : 0;
  FrameQueue<Frame> q_frames(depth);
  FrameQueue<Perceived> q_perceived(depth);
  FrameQueue<InferencePipeline::Synthesized> q_synth(depth);
  auto stats = options.stats ? options.stats : std::make_shared<SessionStats>();

  std::mutex err_mu;
  std::exception_ptr error;
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(err_mu);
      if (!error) error = e;
    }
    q_frames.close();
    q_perceived.close();
    q_synth.close();
  };

  SessionSummary summary;
  const auto t_start = Clock::now();
  std::atomic<std::uint64_t> frames_in{0};

  std::jthread ingest([&] {
    try {
      while (!(options.stop && options.stop->load())) {
        auto f = source.next();
        if (!f) break;
        ++frames_in;
        q_frames.push(std::move(*f));
      }
    } catch (...) {
      fail(std::current_exception());
    }
    q_frames.close();
  });
  std::jthread perceive([&] {
    try {
      while (auto f = q_frames.pop()) q_perceived.push(pipeline.perceive(std::move(*f)));
    } catch (...) {
      fail(std::current_exception());
    }
    q_perceived.close();
  });
  std::jthread gs([&] {
    try {
      while (auto p = q_perceived.pop()) {
        // The garment is bound once, here; a later switch cannot affect this frame.
        const auto garment = selection.current();
        if (options.on_bind) options.on_bind(p->frame.id, garment->entry.garment_id);
        q_synth.push(pipeline.gs_stage(std::move(*p), *garment));
      }
    } catch (...) {
      fail(std::current_exception());
    }
    q_synth.close();
  });

  std::uint64_t last_id = 0;
  bool any = false;
  while (auto s = q_synth.pop()) {
    try {
      TryOnFrameResult r = InferencePipeline::composite_stage(std::move(*s));
      if (any && r.frame_id <= last_id) throw std::logic_error("session produced frames out of order");
      any = true;
      last_id = r.frame_id;
      stats->record(r);
      stats->set_dropped(q_frames.dropped() + q_perceived.dropped() + q_synth.dropped());
      if (auto rep = stats->maybe_roll(Clock::now()); rep && options.on_fps) options.on_fps(*rep);
      ++summary.frames_out;
      sink(std::move(r));
    } catch (...) {
      fail(std::current_exception());
    }
  }
  ingest.join();
  perceive.join();
  gs.join();
  if (error) std::rethrow_exception(error);

  summary.frames_in = frames_in;
  summary.dropped = q_frames.dropped() + q_perceived.dropped() + q_synth.dropped();
  summary.wall_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
  return summary;
}

json InferVideoSummary::to_json() const {
  return {{"frames", frames}, {"wall_seconds", wall_seconds}, {"fps", fps}, {"mean_latency", mean_latency.to_json()},
          {"passthrough", passthrough}};
}

InferVideoSummary infer_frames(FrameSource& source, const LoadedGarment& garment, PerceptionSet backends,
                               const std::function<void(const TryOnFrameResult&)>& on_result,
                               const PipelineOptions& options) {
  GarmentCatalog catalog;
  catalog.add(garment.entry, garment.synthesizer);
  GarmentSelection selection(catalog);
  InferVideoSummary out;
  StageLatency sum;
  SessionOptions so;
  so.live = false;
  so.pipeline = options;
  const auto s = run_session(
      source, std::move(backends), selection,
      [&](TryOnFrameResult r) {
        ++out.frames;
        sum += r.latency;
        if (r.passthrough) ++out.passthrough;
        if (on_result) on_result(r);
      },
      so);
  out.wall_seconds = s.wall_seconds;
  out.fps = s.wall_seconds > 0 ? out.frames / s.wall_seconds : 0;
  out.mean_latency = out.frames ? scaled(sum, 1.0 / out.frames) : StageLatency{};
  return out;
}

InferVideoSummary infer_video(const fs::path& input, const LoadedGarment& garment, const fs::path& output,
                              PerceptionSet backends, const PipelineOptions& options) {
  auto source = open_video(input);
  FrameDirectoryWriter writer(output, source->fps());
  json frames = json::array();
  auto summary = infer_frames(
      *source, garment, std::move(backends),
      [&](const TryOnFrameResult& r) {
        writer.write(r.output);
        json j = r.latency.to_json();
        j["frame_id"] = r.frame_id;
        j["passthrough"] = r.passthrough;
        frames.push_back(j);
      },
      options);
  std::ofstream(output / "latency.json") << json{{"summary", summary.to_json()}, {"frames", frames}}.dump(2) << '\n';
  return summary;
}

}  // namespace tryon
