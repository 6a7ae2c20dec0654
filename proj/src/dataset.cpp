#include "tryon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>
#include <variant>

#include "tryon/hashing.hpp"
#include "tryon/log.hpp"
#include "tryon/png_io.hpp"

namespace tryon {
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Capture guidance

CaptureProtocol CaptureProtocol::standard(double total_seconds) {
  // (name, shoulder abduction, elbow flexion); each pose is mirrored on both arms.
  struct Spec {
    const char* name;
    double shoulder;
    double elbow;
  };
  static constexpr Spec kPoses[] = {
      {"arms-down", 5, 0},           {"a-pose", 45, 0},
      {"t-pose", 90, 0},             {"arms-up", 170, 0},
      {"hands-on-hips", 40, 110},    {"hands-on-shoulders", 90, 150},
      {"hands-behind-head", 130, 140}, {"arms-forward", 90, 10},
      {"elbows-bent-up", 90, 90},    {"elbows-bent-down", 90, -90},
      {"arms-raised-diagonal", 135, 0}, {"arms-crossed-front", 30, 120},
      {"hands-together-front", 60, 45}, {"arms-lowered-diagonal", 25, 20},
  };
  CaptureProtocol p;
  const double each = total_seconds / std::size(kPoses);
  for (const auto& s : kPoses) {
    PoseDescriptor d;
    d.name = s.name;
    d.guide_image = std::string("guides/") + s.name + ".png";
    d.duration_s = each;
    d.left_shoulder_deg = d.right_shoulder_deg = s.shoulder;
    d.left_elbow_deg = d.right_elbow_deg = s.elbow;
    p.poses.push_back(d);
  }
  return p;
}

void CaptureProtocol::validate() const {
  if (poses.size() != 14) throw ConfigError("capture protocol needs exactly 14 poses, got " + std::to_string(poses.size()));
  for (const auto& p : poses) {
    if (!p.symmetric()) throw ConfigError("capture pose '" + p.name + "' is not symmetric");
    if (!(p.duration_s > 0)) throw ConfigError("capture pose '" + p.name + "' has non-positive duration");
  }
}

json GuideScript::to_json() const {
  json entries_json = json::array();
  for (const auto& e : entries)
    entries_json.push_back({{"index", e.index},
                            {"pose", e.pose_name},
                            {"image", e.guide_image},
                            {"start_s", e.start_s},
                            {"duration_s", e.duration_s},
                            {"rotation_deg", e.rotation_deg}});
  return {{"entries", entries_json}, {"total_s", total_s}};
}

GuideScript capture_session_guide(const CaptureProtocol& protocol) {
  GuideScript script;
  double t = 0;
  int i = 0;
  for (const auto& p : protocol.poses) {
    script.entries.push_back({i++, p.name, p.guide_image, t, p.duration_s, protocol.rotation_deg});
    t += p.duration_s;
  }
  script.total_s = t;
  return script;
}

// ---------------------------------------------------------------------------
// JSON

json roi_to_json(const RoiTransform& roi) {
  json j{{"center_x", roi.center_x}, {"center_y", roi.center_y}, {"source_side", roi.source_side},
         {"target_side", roi.target_side}};
  if (roi.affine_jitter) j["affine_jitter"] = *roi.affine_jitter;
  return j;
}

RoiTransform roi_from_json(const json& j) {
  RoiTransform roi;
  roi.center_x = j.at("center_x").get<double>();
  roi.center_y = j.at("center_y").get<double>();
  roi.source_side = j.at("source_side").get<double>();
  roi.target_side = j.at("target_side").get<int>();
  if (j.contains("affine_jitter")) roi.affine_jitter = j.at("affine_jitter").get<Affine2x3>();
  return roi;
}

json DatasetBuildConfig::to_json() const {
  return {{"garment_id", garment_id},
          {"working_short_side", working_short_side},
          {"roi_side", roi_side},
          {"roi_padding", roi_padding},
          {"grid", {{"cell_size", grid.cell_size}, {"line_width", grid.line_width}, {"line_color", grid.line_color}, {"fill_color", grid.fill_color}}},
          {"simplification_set", simplification_set.to_vector()}};
}

DatasetBuildConfig DatasetBuildConfig::from_json(const json& j) {
  DatasetBuildConfig c;
  c.garment_id = j.value("garment_id", c.garment_id);
  c.working_short_side = j.value("working_short_side", c.working_short_side);
  c.roi_side = j.value("roi_side", c.roi_side);
  c.roi_padding = j.value("roi_padding", c.roi_padding);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    c.grid.cell_size = g.value("cell_size", c.grid.cell_size);
    c.grid.line_width = g.value("line_width", c.grid.line_width);
    if (g.contains("line_color")) c.grid.line_color = g.at("line_color").get<std::array<float, 3>>();
    if (g.contains("fill_color")) c.grid.fill_color = g.at("fill_color").get<std::array<float, 3>>();
  }
  if (j.contains("simplification_set")) c.simplification_set = PartSet(j.at("simplification_set").get<std::vector<int>>());
  return c;
}

json DatasetManifest::to_json() const {
  json recs = json::array();
  for (const auto& r : records)
    recs.push_back({{"frame_id", r.frame_id},
                    {"vm", r.vm_path},
                    {"sdp", r.sdp_path},
                    {"dp", r.dp_path},
                    {"garment", r.garment_path},
                    {"mask", r.mask_path},
                    {"roi", roi_to_json(r.roi)},
                    {"pose_confidence", r.pose_confidence},
                    {"touches_border", r.touches_border}});
  json skips = json::array();
  for (const auto& s : skipped) skips.push_back({{"frame_id", s.frame_id}, {"reason", s.reason}});
  return {{"garment_id", garment_id},
          {"pipeline_version", pipeline_version},
          {"simplification_set", simplification_set.to_vector()},
          {"capture", {{"width", capture_width}, {"height", capture_height}, {"fps", fps}}},
          {"working", {{"width", working_width}, {"height", working_height}}},
          {"total_frames", total_frames},
          {"build_config", build_config},
          {"records", recs},
          {"skipped", skips},
          {"content_hash", content_hash}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    m.garment_id = j.at("garment_id").get<std::string>();
    m.pipeline_version = j.at("pipeline_version").get<std::string>();
    m.simplification_set = PartSet(j.at("simplification_set").get<std::vector<int>>());
    m.capture_width = j.at("capture").at("width").get<int>();
    m.capture_height = j.at("capture").at("height").get<int>();
    m.fps = j.at("capture").at("fps").get<double>();
    m.working_width = j.at("working").at("width").get<int>();
    m.working_height = j.at("working").at("height").get<int>();
    m.total_frames = j.at("total_frames").get<std::uint64_t>();
    m.build_config = j.value("build_config", json::object());
    for (const auto& r : j.at("records")) {
      DatasetRecord rec;
      rec.frame_id = r.at("frame_id").get<std::uint64_t>();
      rec.vm_path = r.at("vm").get<std::string>();
      rec.sdp_path = r.at("sdp").get<std::string>();
      rec.dp_path = r.value("dp", std::string{});
      rec.garment_path = r.at("garment").get<std::string>();
      rec.mask_path = r.at("mask").get<std::string>();
      rec.roi = roi_from_json(r.at("roi"));
      rec.pose_confidence = r.value("pose_confidence", 1.0);
      rec.touches_border = r.value("touches_border", false);
      m.records.push_back(std::move(rec));
    }
    for (const auto& s : j.value("skipped", json::array()))
      m.skipped.push_back({s.at("frame_id").get<std::uint64_t>(), s.value("reason", std::string{})});
    m.content_hash = j.value("content_hash", std::string{});
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed dataset manifest: ") + e.what());
  }
  return m;
}

std::string compute_manifest_hash(const DatasetManifest& manifest, const fs::path& root) {
  json j = manifest.to_json();
  j.erase("content_hash");
  Sha256 h;
  h.update(j.dump());
  for (const auto& r : manifest.records) {
    for (const auto* rel : {&r.vm_path, &r.sdp_path, &r.dp_path, &r.garment_path, &r.mask_path}) {
      if (rel->empty()) continue;
      const fs::path p = root / *rel;
      h.update(*rel);
      h.update(fs::exists(p) ? sha256_file(p) : std::string("missing"));
    }
  }
  return h.hex();
}

void save_manifest(const DatasetManifest& manifest, const fs::path& root) {
  fs::create_directories(root);
  std::ofstream out(root / "manifest.json");
  if (!out) throw InputError("cannot write " + (root / "manifest.json").string());
  out << manifest.to_json().dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path p = fs::is_directory(root) ? root / "manifest.json" : root;
  std::ifstream in(p);
  if (!in) throw InputError("cannot read dataset manifest " + p.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("dataset manifest " + p.string() + " is not valid JSON: " + e.what());
  }
  return DatasetManifest::from_json(j);
}

// ---------------------------------------------------------------------------
// Build

namespace {

struct FrameOutcome {
  std::uint64_t frame_id = 0;
  std::variant<DatasetRecord, SkippedFrame> result;
};

bool touches_border(const BoundingBox& b, int h, int w) {
  return b.x0 <= 0 || b.y0 <= 0 || b.x1 >= w - 1 || b.y1 >= h - 1;
}

Image to_working(const Image& frame, int short_side) {
  const int s = std::min(frame.height(), frame.width());
  if (s <= short_side) return frame;
  const double f = static_cast<double>(short_side) / s;
  return resize(frame, static_cast<int>(std::lround(frame.height() * f)),
                static_cast<int>(std::lround(frame.width() * f)));
}

FrameOutcome process_frame(const Frame& frame, PerceptionSet& backends, const DatasetBuildConfig& cfg,
                           const fs::path& out) {
  const std::uint64_t id = frame.id;
  auto skip = [&](std::string why) {
    log(LogLevel::Info, "skipping frame " + std::to_string(id) + ": " + why);
    return FrameOutcome{id, SkippedFrame{id, std::move(why)}};
  };
  try {
    const Image& img = frame.image;
    const auto pose = backends.pose->estimate_pose(img, id);
    if (!pose) return skip("no person detected");
    const auto dp = backends.densepose->estimate_densepose(img, id);
    if (!dp) return skip("no DensePose body");
    const ParseResult parse = backends.parse->parse_garment(img, id);
    const auto bbox = upper_body_bbox(*dp);
    if (!bbox) return skip("no upper body in DensePose map");

    const RoiTransform roi = roi_from_bbox(*bbox, cfg.roi_padding, cfg.roi_side);
    const Image vm = render_measurement_garment(trim_smpl(*pose), cfg.grid, pose->camera, img.height(), img.width());
    const Image dp_img = encode_iuv(*dp);
    const Image sdp = simplify(dp_img, cfg.simplification_set).data;

    // Surface encodings are categorical in channel 0, so they and the mask sample nearest.
    const SoftMask mask = roi_extract(parse.garment_mask, roi, Interpolation::Nearest).binarized();
    const Image garment = apply_mask(roi_extract(parse.garment_image, roi, Interpolation::Bilinear), mask);

    DatasetRecord rec;
    rec.frame_id = id;
    const std::string stem = "frames/" + frame_file_name(id).substr(0, frame_file_name(id).size() - 4);
    rec.vm_path = stem + "_vm.png";
    rec.sdp_path = stem + "_sdp.png";
    rec.dp_path = stem + "_dp.png";
    rec.garment_path = stem + "_garment.png";
    rec.mask_path = stem + "_mask.png";
    rec.roi = roi;
    rec.pose_confidence = std::clamp(pose->confidence, 0.0, 1.0);
    rec.touches_border = touches_border(*bbox, img.height(), img.width());
    write_png(out / rec.vm_path, roi_extract(vm, roi, Interpolation::Bilinear));
    write_png(out / rec.sdp_path, roi_extract(sdp, roi, Interpolation::Nearest));
    write_png(out / rec.dp_path, roi_extract(dp_img, roi, Interpolation::Nearest));
    write_png(out / rec.garment_path, garment);
    write_png(out / rec.mask_path, mask);
    if (rec.touches_border) log(LogLevel::Info, "frame " + std::to_string(id) + " is partially out of frame");
    return {id, rec};
  } catch (const BackendError& e) {
    return skip(std::string("backend failure: ") + e.what());
  } catch (const InputError& e) {
    return skip(e.what());
  }
}

}  // namespace

DatasetManifest build_dataset(FrameSource& video, const BackendFactory& backends, const DatasetBuildConfig& config,
                              const fs::path& out) {
  const int workers = std::max(1, config.workers);
  std::vector<PerceptionSet> pool;
  for (int w = 0; w < workers; ++w) {
    pool.push_back(backends());
    pool.back().require_available();
  }
  fs::create_directories(out / "frames");

  DatasetManifest manifest;
  manifest.garment_id = config.garment_id;
  manifest.simplification_set = config.simplification_set;
  manifest.fps = video.fps();
  manifest.build_config = config.to_json();

  // Chunked fan-out: each worker handles a strided slice, results are reduced in frame order.
  const std::size_t chunk = static_cast<std::size_t>(workers) * 4;
  bool done = false;
  while (!done) {
    std::vector<Frame> batch;
    while (batch.size() < chunk) {
      auto f = video.next();
      if (!f) {
        done = true;
        break;
      }
      if (manifest.capture_width == 0) {
        manifest.capture_width = f->image.width();
        manifest.capture_height = f->image.height();
      }
      f->image = to_working(f->image, config.working_short_side);
      manifest.working_width = f->image.width();
      manifest.working_height = f->image.height();
      batch.push_back(std::move(*f));
    }
    std::vector<FrameOutcome> outcomes(batch.size());
    auto run = [&](int w) {
      for (std::size_t i = static_cast<std::size_t>(w); i < batch.size(); i += static_cast<std::size_t>(workers))
        outcomes[i] = process_frame(batch[i], pool[static_cast<std::size_t>(w)], config, out);
    };
    if (workers == 1) {
      run(0);
    } else {
      std::vector<std::jthread> threads;
      for (int w = 0; w < workers; ++w) threads.emplace_back(run, w);
    }
    for (auto& o : outcomes) {
      ++manifest.total_frames;
      if (auto* rec = std::get_if<DatasetRecord>(&o.result))
        manifest.records.push_back(std::move(*rec));
      else
        manifest.skipped.push_back(std::get<SkippedFrame>(o.result));
    }
  }
  if (manifest.records.empty())
    throw EmptyDatasetError("dataset is empty: none of " + std::to_string(manifest.total_frames) +
                            " frames produced a record");
  manifest.content_hash = compute_manifest_hash(manifest, out);
  save_manifest(manifest, out);
  log(LogLevel::Info, "dataset " + manifest.garment_id + ": " + std::to_string(manifest.records.size()) + " records, " +
                          std::to_string(manifest.skipped.size()) + " skipped");
  return manifest;
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::ok() const { return dataset_issues.empty() && failing() == 0; }

std::size_t ValidationReport::failing() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok; }));
}

json ValidationReport::to_json() const {
  json recs = json::array();
  for (const auto& r : records) recs.push_back({{"frame_id", r.frame_id}, {"ok", r.ok}, {"issues", r.issues}});
  return {{"ok", ok()}, {"failing", failing()}, {"dataset_issues", dataset_issues}, {"records", recs}};
}

ValidationReport validate_dataset(const DatasetManifest& manifest, const fs::path& root) {
  ValidationReport report;
  if (manifest.records.empty()) report.dataset_issues.push_back("dataset has no records");
  if (!manifest.content_hash.empty() && compute_manifest_hash(manifest, root) != manifest.content_hash)
    report.dataset_issues.push_back("content hash mismatch");

  for (const auto& r : manifest.records) {
    RecordCheck check;
    check.frame_id = r.frame_id;
    auto fail = [&](std::string issue) {
      check.ok = false;
      check.issues.push_back(std::move(issue));
    };
    std::vector<std::pair<std::string, Image>> images;
    for (const auto& [label, rel] : {std::pair{"vm", &r.vm_path}, {"sdp", &r.sdp_path}, {"garment", &r.garment_path},
                                     {"mask", &r.mask_path}, {"dp", &r.dp_path}}) {
      if (rel->empty()) {
        if (std::string_view(label) != "dp") fail(std::string(label) + ": no file recorded");
        continue;
      }
      const fs::path p = root / *rel;
      if (!fs::exists(p)) {
        fail(std::string(label) + ": missing file " + *rel);
        continue;
      }
      try {
        images.emplace_back(label, read_png(p));
      } catch (const std::exception& e) {
        fail(std::string(label) + ": unreadable (" + e.what() + ")");
      }
    }
    if (check.ok) {
      const auto& first = images.front().second;
      for (const auto& [label, img] : images)
        if (img.height() != first.height() || img.width() != first.width())
          fail(label + ": dimensions disagree with vm");
      if (first.height() != r.roi.target_side || first.width() != r.roi.target_side)
        fail("record dimensions disagree with the recorded ROI");
    }
    if (check.ok) {
      const Image* garment = nullptr;
      const Image* mask_img = nullptr;
      for (const auto& [label, img] : images) {
        if (label == "garment") garment = &img;
        if (label == "mask") mask_img = &img;
      }
      const SoftMask mask = SoftMask::from_image(*mask_img);
      if (!mask.is_binary()) fail("mask: non-binary values");
      bool leak = false;
      for (std::size_t i = 0; i < mask.size() && !leak; ++i)
        if (mask.data()[i] < 0.5f)
          for (int c = 0; c < garment->channels(); ++c)
            if (garment->plane(c)[i] != 0.0f) leak = true;
      if (leak) fail("garment: non-zero outside mask");
    }
    report.records.push_back(std::move(check));
  }
  return report;
}

}  // namespace tryon
