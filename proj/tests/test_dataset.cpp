#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "tryon/dataset.hpp"
#include "tryon/error.hpp"
#include "tryon/hashing.hpp"
#include "tryon/png_io.hpp"
#include "tryon/synthetic.hpp"

using namespace tryon;
using tryon::testing::synthetic_dataset;
using tryon::testing::TempDir;
namespace fs = std::filesystem;

namespace {

constexpr int kRoi = 48;

// One 30-frame build shared by the read-only checks.
class BuiltDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("ds");
    synthetic::CaptureConfig cap;
    manifest_ = new DatasetManifest(synthetic_dataset(dir_->path(), cap, kRoi));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete dir_;
  }
  static TempDir* dir_;
  static DatasetManifest* manifest_;
};
TempDir* BuiltDataset::dir_ = nullptr;
DatasetManifest* BuiltDataset::manifest_ = nullptr;

// Copies the built dataset so a test can damage it.
fs::path clone(const fs::path& from, const TempDir& to) {
  fs::copy(from, to.path() / "copy", fs::copy_options::recursive);
  return to.path() / "copy";
}

}  // namespace

TEST_F(BuiltDataset, ThirtyFramesThirtyRecords) {
  EXPECT_EQ(manifest_->records.size(), 30u);
  EXPECT_TRUE(manifest_->skipped.empty());
  EXPECT_EQ(manifest_->total_frames, 30u);
  EXPECT_EQ(manifest_->garment_id, "toy");
}

TEST_F(BuiltDataset, FourImagesShareRoiDimensions) {
  for (const auto& r : manifest_->records) {
    for (const auto* rel : {&r.vm_path, &r.sdp_path, &r.garment_path, &r.mask_path}) {
      const Image img = read_png(dir_->path() / *rel);
      ASSERT_EQ(img.height(), kRoi);
      ASSERT_EQ(img.width(), kRoi);
    }
    EXPECT_EQ(r.roi.target_side, kRoi);
  }
}

TEST_F(BuiltDataset, FreshBuildValidates) {
  const auto report = validate_dataset(*manifest_, dir_->path());
  EXPECT_TRUE(report.ok()) << report.to_json().dump(1);
  EXPECT_EQ(report.records.size(), 30u);
}

TEST_F(BuiltDataset, ManifestRoundTripsThroughDisk) {
  const DatasetManifest loaded = load_manifest(dir_->path());
  EXPECT_EQ(loaded.to_json(), manifest_->to_json());
  EXPECT_EQ(compute_manifest_hash(loaded, dir_->path()), manifest_->content_hash);
}

TEST_F(BuiltDataset, DeletedFileFailsExactlyOneRecord) {
  TempDir scratch;
  const fs::path root = clone(dir_->path(), scratch);
  fs::remove(root / manifest_->records[4].garment_path);
  const auto report = validate_dataset(load_manifest(root), root);
  EXPECT_EQ(report.failing(), 1u);
  EXPECT_FALSE(report.records[4].ok);
  EXPECT_FALSE(report.ok());
}

TEST_F(BuiltDataset, HalfValuedMaskIsFlagged) {
  TempDir scratch;
  const fs::path root = clone(dir_->path(), scratch);
  const auto& rec = manifest_->records[2];
  SoftMask m = read_mask_png(root / rec.mask_path);
  m.at(kRoi / 2, kRoi / 2) = 0.5f;
  write_png(root / rec.mask_path, m);
  const auto report = validate_dataset(load_manifest(root), root);
  EXPECT_EQ(report.failing(), 1u);
  bool flagged = false;
  for (const auto& issue : report.records[2].issues) flagged |= issue.find("non-binary") != std::string::npos;
  EXPECT_TRUE(flagged) << report.to_json().dump(1);
}

TEST_F(BuiltDataset, HashTracksFilesAndConfig) {
  TempDir scratch;
  const fs::path root = clone(dir_->path(), scratch);
  DatasetManifest m = load_manifest(root);
  const std::string base = compute_manifest_hash(m, root);
  EXPECT_EQ(base, manifest_->content_hash);

  Image vm = read_png(root / m.records[0].vm_path);
  vm.at(0, 0, 0) = vm.at(0, 0, 0) > 0.5f ? 0.0f : 1.0f;
  write_png(root / m.records[0].vm_path, vm);
  EXPECT_NE(compute_manifest_hash(m, root), base);

  TempDir scratch2;
  const fs::path root2 = clone(dir_->path(), scratch2);
  DatasetManifest m2 = load_manifest(root2);
  m2.build_config["roi_padding"] = 0.2;
  EXPECT_NE(compute_manifest_hash(m2, root2), base);
}

TEST(DatasetBuild, SameInputSameHash) {
  TempDir a, b;
  synthetic::CaptureConfig cap;
  cap.frames = 8;
  EXPECT_EQ(synthetic_dataset(a.path(), cap, 32).content_hash, synthetic_dataset(b.path(), cap, 32).content_hash);
}

TEST(DatasetBuild, WorkerCountDoesNotChangeResult) {
  TempDir a, b;
  synthetic::CaptureConfig cap;
  cap.frames = 9;
  DatasetBuildConfig cfg;
  cfg.roi_side = 32;
  cfg.grid = cap.grid;
  MemoryFrameSource s1(synthetic::make_capture(cap)), s2(synthetic::make_capture(cap));
  const auto m1 = build_dataset(s1, tryon::testing::stub_backends(), cfg, a.path());
  cfg.workers = 3;
  const auto m2 = build_dataset(s2, tryon::testing::stub_backends(), cfg, b.path());
  EXPECT_EQ(m1.records.size(), m2.records.size());
  for (std::size_t i = 0; i < m1.records.size(); ++i)
    EXPECT_EQ(sha256_file(a / m1.records[i].garment_path), sha256_file(b / m2.records[i].garment_path));
}

TEST(DatasetBuild, InjectedFailuresAreSkippedAndLogged) {
  TempDir dir;
  synthetic::CaptureConfig cap;
  const auto m = synthetic_dataset(dir.path(), cap, 32, {3, 7});
  EXPECT_EQ(m.records.size(), 28u);
  ASSERT_EQ(m.skipped.size(), 2u);
  EXPECT_EQ(m.skipped[0].frame_id, 3u);
  EXPECT_EQ(m.skipped[1].frame_id, 7u);
  EXPECT_EQ(m.skipped.size() + m.records.size(), m.total_frames);
  for (const auto& r : m.records) EXPECT_TRUE(r.frame_id != 3 && r.frame_id != 7);
}

TEST(DatasetBuild, BlankFramesSkipWithReasonAndCountsAddUp) {
  TempDir dir;
  synthetic::CaptureConfig cap;
  cap.frames = 6;
  auto frames = synthetic::make_capture(cap);
  frames[1] = Image(3, cap.height, cap.width);
  frames[4] = Image(3, cap.height, cap.width);
  MemoryFrameSource src(frames);
  DatasetBuildConfig cfg;
  cfg.roi_side = 32;
  const auto m = build_dataset(src, tryon::testing::stub_backends(), cfg, dir.path());
  EXPECT_EQ(m.records.size(), 4u);
  EXPECT_EQ(m.skipped.size() + m.records.size(), m.total_frames);
  for (const auto& s : m.skipped) EXPECT_FALSE(s.reason.empty());
}

TEST(DatasetBuild, NothingUsableIsEmptyDatasetError) {
  TempDir dir;
  MemoryFrameSource src({Image(3, 40, 40), Image(3, 40, 40)});
  EXPECT_THROW(build_dataset(src, tryon::testing::stub_backends(), DatasetBuildConfig{}, dir.path()), EmptyDatasetError);
}

TEST(DatasetBuild, BorderTouchingFramesKeptButFlagged) {
  TempDir dir;
  // A disc cut off by the left edge.
  MemoryFrameSource src({synthetic::disc_person(80, 80, 5, 40, 20), synthetic::disc_person(80, 80, 40, 40, 20)});
  DatasetBuildConfig cfg;
  cfg.roi_side = 32;
  const auto m = build_dataset(src, tryon::testing::stub_backends(), cfg, dir.path());
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_TRUE(m.records[0].touches_border);
  EXPECT_FALSE(m.records[1].touches_border);
}

TEST(DatasetBuild, FromFrameDirectory) {
  TempDir dir;
  synthetic::CaptureConfig cap;
  cap.frames = 4;
  tryon::testing::write_video(dir / "video", synthetic::make_capture(cap), 24.0);
  auto src = open_video(dir / "video");
  EXPECT_DOUBLE_EQ(src->fps(), 24.0);
  DatasetBuildConfig cfg;
  cfg.roi_side = 32;
  const auto m = build_dataset(*src, tryon::testing::stub_backends(), cfg, dir / "ds");
  EXPECT_EQ(m.records.size(), 4u);
  EXPECT_DOUBLE_EQ(m.fps, 24.0);
  EXPECT_THROW(open_video(dir / "missing"), InputError);
}

TEST(DatasetConfig, JsonRoundTrip) {
  DatasetBuildConfig c;
  c.garment_id = "shirt";
  c.roi_side = 256;
  c.simplification_set = PartSet{1, 2};
  const auto back = DatasetBuildConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.simplification_set, c.simplification_set);
}

TEST(CaptureGuide, FourteenSymmetricPosesOverTwoMinutes) {
  const auto protocol = CaptureProtocol::standard();
  EXPECT_NO_THROW(protocol.validate());
  ASSERT_EQ(protocol.poses.size(), 14u);
  for (const auto& p : protocol.poses) {
    EXPECT_TRUE(p.symmetric()) << p.name;
    EXPECT_NEAR(p.duration_s, 120.0 / 14, 1e-9);
  }
  const auto guide = capture_session_guide(protocol);
  ASSERT_EQ(guide.entries.size(), 14u);
  EXPECT_NEAR(guide.total_s, 120.0, 10.0);
  EXPECT_NEAR(guide.entries[0].duration_s, 8.57, 0.01);
  for (std::size_t i = 1; i < guide.entries.size(); ++i)
    EXPECT_NEAR(guide.entries[i].start_s, guide.entries[i - 1].start_s + guide.entries[i - 1].duration_s, 1e-9);
}

TEST(CaptureGuide, AsymmetricOrShortProtocolRejected) {
  auto p = CaptureProtocol::standard();
  p.poses[3].left_elbow_deg += 10;
  EXPECT_THROW(p.validate(), ConfigError);
  auto q = CaptureProtocol::standard();
  q.poses.pop_back();
  EXPECT_THROW(q.validate(), ConfigError);
}
