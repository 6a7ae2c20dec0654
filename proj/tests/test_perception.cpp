#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "support.hpp"
#include "tryon/body_model.hpp"
#include "tryon/densepose_prep.hpp"
#include "tryon/error.hpp"
#include "tryon/measurement_garment.hpp"
#include "tryon/perception.hpp"
#include "tryon/synthetic.hpp"

using namespace tryon;

namespace {

std::optional<BoundingBox> scan_box(const Image& frame) {
  std::optional<BoundingBox> box;
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      if (is_background_pixel(frame, static_cast<std::size_t>(y) * frame.width() + x)) continue;
      if (!box) box = BoundingBox{x, y, x, y};
      box->x0 = std::min(box->x0, x);
      box->y0 = std::min(box->y0, y);
      box->x1 = std::max(box->x1, x);
      box->y1 = std::max(box->y1, y);
    }
  return box;
}

Image max_blend(const Image& a, const Image& b) {
  Image out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::max(a.data()[i], b.data()[i]);
  return out;
}

}  // namespace

// --- stubs -----------------------------------------------------------------------------

TEST(StubBackends, BlankFrameHasNobody) {
  const Image blank(3, 48, 64);
  StubPoseBackend pose;
  StubDensePoseBackend dp;
  StubParseBackend parse;
  EXPECT_FALSE(pose.estimate_pose(blank, 0));
  EXPECT_FALSE(dp.estimate_densepose(blank, 0));
  const auto p = parse.parse_garment(blank, 0);
  EXPECT_TRUE(std::all_of(p.garment_mask.data().begin(), p.garment_mask.data().end(), [](float v) { return v == 0; }));
}

TEST(StubBackends, SeedSevenGivesCanonicalParameters) {
  const Image frame = synthetic::disc_person(80, 60, 30, 40, 15);
  StubPoseBackend a(7), b(7);
  const auto ea = a.estimate_pose(frame, 3);
  ASSERT_TRUE(ea);
  EXPECT_EQ(ea->pose, canonical_pose());
  EXPECT_EQ(ea->shape, (std::array<double, kNumShapeParams>{}));
  EXPECT_GT(ea->camera.scale, 0);
  EXPECT_EQ(*ea, *b.estimate_pose(frame, 3));
}

TEST(StubBackends, PureFunctionsOfFrame) {
  synthetic::CaptureConfig cap;
  cap.frames = 2;
  const auto frames = synthetic::make_capture(cap);
  StubDensePoseBackend d1(3), d2(3);
  EXPECT_EQ(*d1.estimate_densepose(frames[1], 1), *d2.estimate_densepose(frames[1], 1));
  StubParseBackend p;
  const auto r1 = p.parse_garment(frames[0], 0), r2 = p.parse_garment(frames[0], 0);
  EXPECT_EQ(r1.garment_mask, r2.garment_mask);
  EXPECT_EQ(r1.garment_image, r2.garment_image);
}

TEST(StubBackends, TwoPersonsPickLargerBox) {
  const Image small = synthetic::disc_person(120, 160, 30, 40, 12);
  const Image large = synthetic::disc_person(120, 160, 110, 70, 30);
  const Image both = max_blend(small, large);
  const auto want = scan_box(large);
  ASSERT_TRUE(want);
  ASSERT_GT(want->width() * want->height(), scan_box(small)->width() * scan_box(small)->height());
  EXPECT_EQ(largest_person_box(both), want);
  const auto est = StubPoseBackend().estimate_pose(both, 0);
  ASSERT_TRUE(est);
  EXPECT_EQ(est->camera, camera_for_box(*want));
}

TEST(StubBackends, DensePoseLabelsExactlyTheSilhouette) {
  const Image frame = synthetic::disc_person(90, 70, 35, 45, 25);
  const auto dp = StubDensePoseBackend().estimate_densepose(frame, 0);
  ASSERT_TRUE(dp);
  EXPECT_TRUE(dp->valid());
  for (std::size_t i = 0; i < dp->part.size(); ++i) {
    const bool fg = !is_background_pixel(frame, i);
    ASSERT_EQ(dp->part[i] != 0, fg) << i;
    if (!fg) ASSERT_TRUE(dp->u[i] == 0 && dp->v[i] == 0);
  }
}

TEST(StubBackends, ParseMaskIsTheShirtRectangle) {
  Image frame(3, 60, 50);
  for (int y = 10; y < 55; ++y)
    for (int x = 12; x < 38; ++x)
      for (int c = 0; c < 3; ++c) frame.at(c, y, x) = kStubSkinColor[c];
  int oracle_area = 0;
  for (int y = 20; y < 41; ++y)
    for (int x = 15; x < 33; ++x, ++oracle_area)
      for (int c = 0; c < 3; ++c) frame.at(c, y, x) = 0.2f + 0.3f * c;
  const auto r = StubParseBackend().parse_garment(frame, 0);
  int area = 0;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 50; ++x) {
      const bool inside = y >= 20 && y < 41 && x >= 15 && x < 33;
      ASSERT_EQ(r.garment_mask.at(y, x), inside ? 1.0f : 0.0f);
      area += r.garment_mask.at(y, x) > 0;
      for (int c = 0; c < 3; ++c) ASSERT_EQ(r.garment_image.at(c, y, x), inside ? frame.at(c, y, x) : 0.0f);
    }
  EXPECT_EQ(area, oracle_area);
}

TEST(Backends, UnknownNameIsConfigError) {
  BackendConfig c;
  c.pose = "magic";
  EXPECT_THROW(make_backends(c), ConfigError);
}

TEST(Backends, MissingAdapterRefusesToStart) {
  tryon::testing::TempDir dir;
  BackendConfig c;
  c.densepose = "external";
  c.adapter_dir = dir.path();
  auto set = make_backends(c);
  EXPECT_THROW(set.require_available(), BackendError);
  EXPECT_NO_THROW(make_backends(BackendConfig{}).require_available());
}

// --- body model / measurement garment --------------------------------------------------

TEST(PartLabels, BundledTableMatchesModelAndChecksum) {
  const auto& t = PartLabelTable::bundled();
  EXPECT_EQ(t.vertex_part.size(), BodyModel::standard().vertex_count());
  EXPECT_EQ(t.checksum, t.compute_checksum());
  const auto fresh = PartLabelTable::from_model(BodyModel::standard());
  EXPECT_EQ(fresh.vertex_part, t.vertex_part);
}

TEST(PartLabels, TamperedTableRejected) {
  tryon::testing::TempDir dir;
  auto t = PartLabelTable::bundled();
  t.vertex_part[0] = (t.vertex_part[0] + 1) % static_cast<int>(t.part_names.size());
  t.save(dir / "t.json");
  auto text = nlohmann::json::parse(std::ifstream(dir / "t.json"));
  text["checksum"] = PartLabelTable::bundled().checksum;
  std::ofstream(dir / "t.json") << text.dump();
  EXPECT_THROW(PartLabelTable::load(dir / "t.json"), ConfigError);
}

TEST(Trim, TPoseKeepsExactlyTheMeasurementVertices) {
  const auto& t = PartLabelTable::bundled();
  std::size_t oracle = 0;
  for (int p : t.vertex_part) oracle += is_measurement_part(part_from_name(t.part_names[p]));
  BodyPoseEstimate est;
  est.pose = t_pose();
  const auto mesh = trim_smpl(est);
  EXPECT_EQ(mesh.vertices.size(), oracle);
  EXPECT_GT(mesh.faces.size(), 0u);
}

TEST(Trim, NoHeadHandOrLegFaces) {
  for (const auto& pose : {t_pose(), canonical_pose()}) {
    BodyPoseEstimate est;
    est.pose = pose;
    const auto mesh = trim_smpl(est);
    for (const auto& f : mesh.faces)
      for (int v : f) {
        const BodyPart p = mesh.vertex_part[v];
        ASSERT_TRUE(is_measurement_part(p)) << part_name(p);
        ASSERT_NE(p, BodyPart::Head);
        ASSERT_NE(p, BodyPart::LeftHand);
        ASSERT_NE(p, BodyPart::LeftUpLeg);
      }
  }
}

TEST(Trim, ShapeDoesNotChangeTopology) {
  BodyPoseEstimate a, b;
  b.shape[0] = 2.0;
  EXPECT_EQ(trim_smpl(a).faces, trim_smpl(b).faces);
  EXPECT_NE(trim_smpl(a).vertices, trim_smpl(b).vertices);
}

TEST(Trim, NonFiniteRejected) {
  BodyPoseEstimate est;
  est.pose[5] = std::nan("");
  EXPECT_THROW(trim_smpl(est), InputError);
}

namespace {

struct TPoseScene {
  TrimmedBodyMesh mesh;
  WeakPerspectiveCamera camera;
  static constexpr int kSide = 128;

  TPoseScene() {
    BodyPoseEstimate est;
    est.pose = t_pose();
    mesh = trim_smpl(est);
    double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
    for (const auto& v : BodyModel::standard().posed({}, t_pose()).vertices) {
      x0 = std::min(x0, v.x()), x1 = std::max(x1, v.x());
      y0 = std::min(y0, v.y()), y1 = std::max(y1, v.y());
    }
    camera.scale = 0.8 * kSide / std::max(x1 - x0, y1 - y0);
    camera.tx = kSide / 2.0 - camera.scale * (x0 + x1) / 2;
    camera.ty = kSide / 2.0 + camera.scale * (y0 + y1) / 2;
  }
};

bool inside_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                     const Eigen::Vector2d& c) {
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
    return (u.x() - o.x()) * (v.y() - o.y()) - (u.y() - o.y()) * (v.x() - o.x());
  };
  const double d1 = cross(a, b, p), d2 = cross(b, c, p), d3 = cross(c, a, p);
  return !((d1 < 0 || d2 < 0 || d3 < 0) && (d1 > 0 || d2 > 0 || d3 > 0));
}

}  // namespace

TEST(Render, EmptyMeshAndBehindCameraAreBlack) {
  const GridTexture grid;
  WeakPerspectiveCamera cam{40, 32, 32, 10};
  const Image empty = render_measurement_garment({}, grid, cam, 64, 64);
  EXPECT_EQ(empty, Image(3, 64, 64));
  TPoseScene scene;
  for (auto& v : scene.mesh.vertices) v.z() += 100.0;
  EXPECT_EQ(render_measurement_garment(scene.mesh, grid, scene.camera, 64, 64), Image(3, 64, 64));
}

TEST(Render, TPoseCoverageAndSilhouetteMatchProjectionOracle) {
  TPoseScene scene;
  const int n = TPoseScene::kSide;
  const Image img = render_measurement_garment(scene.mesh, GridTexture{}, scene.camera, n, n);
  const SoftMask rendered = synthetic::foreground(img);
  std::vector<Eigen::Vector2d> px;
  for (const auto& v : scene.mesh.vertices) px.push_back(project(v, scene.camera));
  std::vector<std::uint8_t> oracle(static_cast<std::size_t>(n) * n);
  for (const auto& f : scene.mesh.faces) {
    const auto& a = px[f[0]];
    const auto& b = px[f[1]];
    const auto& c = px[f[2]];
    const int xa = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int xb = std::min(n - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int ya = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int yb = std::min(n - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = ya; y <= yb; ++y)
      for (int x = xa; x <= xb; ++x)
        if (inside_triangle({x + 0.5, y + 0.5}, a, b, c)) oracle[static_cast<std::size_t>(y) * n + x] = 1;
  }
  int covered = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const bool r = rendered.at(y, x) > 0;
      covered += r;
      if (r == static_cast<bool>(oracle[static_cast<std::size_t>(y) * n + x])) continue;
      // Disagreements must sit within 2 px of the oracle's boundary.
      bool near_boundary = false;
      for (int dy = -2; dy <= 2 && !near_boundary; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= n || xx >= n) continue;
          if (static_cast<bool>(oracle[static_cast<std::size_t>(yy) * n + xx]) == r) {
            near_boundary = true;
            break;
          }
        }
      ASSERT_TRUE(near_boundary) << x << "," << y;
    }
  const double frac = static_cast<double>(covered) / (n * n);
  EXPECT_GT(frac, 0.05);
  EXPECT_LT(frac, 0.60);
}

TEST(Render, Deterministic) {
  TPoseScene scene;
  const GridTexture grid;
  EXPECT_EQ(render_measurement_garment(scene.mesh, grid, scene.camera, 96, 96),
            render_measurement_garment(scene.mesh, grid, scene.camera, 96, 96));
}

TEST(Render, IntegerCameraShiftTranslatesSilhouette) {
  TPoseScene scene;
  const int n = TPoseScene::kSide;
  const SoftMask base = synthetic::foreground(render_measurement_garment(scene.mesh, GridTexture{}, scene.camera, n, n));
  for (auto [dx, dy] : {std::pair{5, 0}, std::pair{-3, 7}}) {
    auto cam = scene.camera;
    cam.tx += dx;
    cam.ty += dy;
    const SoftMask moved = synthetic::foreground(render_measurement_garment(scene.mesh, GridTexture{}, cam, n, n));
    int diff = 0, total = 0;
    for (int y = 10; y < n - 10; ++y)
      for (int x = 10; x < n - 10; ++x) {
        total += base.at(y, x) > 0;
        diff += (base.at(y, x) > 0) != (moved.at(y + dy, x + dx) > 0);
      }
    EXPECT_EQ(diff, 0) << "of " << total << " for shift " << dx << "," << dy;
  }
}

TEST(Render, StaysInsideDilatedVertexBox) {
  TPoseScene scene;
  const int n = TPoseScene::kSide;
  const SoftMask m = synthetic::foreground(render_measurement_garment(scene.mesh, GridTexture{}, scene.camera, n, n));
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (const auto& v : scene.mesh.vertices) {
    const auto p = project(v, scene.camera);
    x0 = std::min(x0, p.x()), x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y()), y1 = std::max(y1, p.y());
  }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (m.at(y, x) > 0) ASSERT_TRUE(x >= x0 - 1 && x <= x1 + 1 && y >= y0 - 1 && y <= y1 + 1);
}

TEST(Grid, Validation) {
  EXPECT_NO_THROW(GridTexture{}.validate());
  EXPECT_THROW((GridTexture{4, 4}.validate()), ConfigError);
  EXPECT_THROW((GridTexture{8, 0}.validate()), ConfigError);
  const GridTexture g{10, 2, {0, 0, 0}, {1, 1, 1}};
  EXPECT_EQ(g.sample(0.5, 5.0)[0], 0.0f);
  EXPECT_EQ(g.sample(5.0, 5.0)[0], 1.0f);
}

// --- densepose preparation -------------------------------------------------------------

TEST(Iuv, EncodingDefinition) {
  DensePoseMap dp(2, 2);
  dp.part[1] = 24;
  dp.u[1] = 0.5f;
  dp.v[1] = 0.25f;
  const Image e = encode_iuv(dp);
  EXPECT_FLOAT_EQ(e.at(0, 0, 1), 1.0f);
  EXPECT_FLOAT_EQ(e.at(1, 0, 1), 0.5f);
  EXPECT_FLOAT_EQ(e.at(2, 0, 1), 0.25f);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(e.at(c, 0, 0), 0.0f);
}

TEST(Iuv, RoundTripEveryPartAt8Bit) {
  DensePoseMap dp(1, kNumDensePoseParts + 1);
  for (int p = 1; p <= kNumDensePoseParts; ++p) {
    dp.part[p] = static_cast<std::uint8_t>(p);
    dp.u[p] = std::round(p * 10.0f) / 255.0f;
    dp.v[p] = std::round(255.0f - p * 7.0f) / 255.0f;
  }
  const DensePoseMap back = decode_iuv(quantize_8bit(encode_iuv(dp)));
  EXPECT_EQ(back.part, dp.part);
  for (std::size_t i = 0; i < dp.u.size(); ++i) {
    EXPECT_NEAR(back.u[i], dp.u[i], 1e-6);
    EXPECT_NEAR(back.v[i], dp.v[i], 1e-6);
  }
}

TEST(Iuv, OutOfRangePartRejected) {
  DensePoseMap dp(1, 1);
  dp.part[0] = 25;
  EXPECT_THROW(encode_iuv(dp), InputError);
}

TEST(Simplify, EachPartWhitensExactlyWhenInSet) {
  DensePoseMap dp(1, kNumDensePoseParts + 1);
  for (int p = 1; p <= kNumDensePoseParts; ++p) {
    dp.part[p] = static_cast<std::uint8_t>(p);
    dp.u[p] = 0.3f;
    dp.v[p] = 0.6f;
  }
  const Image iuv = encode_iuv(dp);
  for (int member = 1; member <= kNumDensePoseParts; ++member) {
    const Image s = simplify(iuv, PartSet{member}).data;
    for (int p = 0; p <= kNumDensePoseParts; ++p)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(s.at(c, 0, p), p == member ? 1.0f : iuv.at(c, 0, p)) << member << "/" << p;
  }
}

TEST(Simplify, DefaultSetAndIdempotence) {
  const PartSet s = default_simplification_set();
  EXPECT_EQ(s.to_vector(), (std::vector<int>{1, 2, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14}));
  const Image frame = synthetic::disc_person(80, 60, 30, 40, 20);
  const Image iuv = encode_iuv(*StubDensePoseBackend().estimate_densepose(frame, 0));
  const Image once = simplify(iuv, s).data;
  EXPECT_EQ(simplify(once, s).data, once);
}

TEST(UpperBodyBox, EmptyAndSingleton) {
  DensePoseMap dp(100, 100);
  EXPECT_FALSE(upper_body_bbox(dp));
  dp.part[dp.index(60, 40)] = dp_part::kTorsoFront;
  EXPECT_EQ(upper_body_bbox(dp), (BoundingBox{40, 60, 40, 60}));
}

TEST(UpperBodyBox, TwoBlobsMatchScanAndGrowMonotonically) {
  std::mt19937_64 rng(4);
  DensePoseMap dp(80, 90);
  auto blob = [&](int cx, int cy, int r, int part) {
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x) dp.part[dp.index(y, x)] = static_cast<std::uint8_t>(part);
  };
  blob(20, 15, 4, dp_part::kHeadFront);
  blob(60, 50, 8, dp_part::kUpperArmLeftFront);
  blob(75, 70, 3, dp_part::kLeftFoot);  // not upper body
  const auto upper = upper_body_parts();
  auto scan = [&] {
    std::optional<BoundingBox> b;
    for (int y = 0; y < dp.height; ++y)
      for (int x = 0; x < dp.width; ++x) {
        if (!upper.contains(dp.part[dp.index(y, x)])) continue;
        if (!b) b = BoundingBox{x, y, x, y};
        b->x0 = std::min(b->x0, x), b->y0 = std::min(b->y0, y);
        b->x1 = std::max(b->x1, x), b->y1 = std::max(b->y1, y);
      }
    return b;
  };
  EXPECT_EQ(upper_body_bbox(dp), scan());
  std::uniform_int_distribution<int> ux(0, 89), uy(0, 79);
  auto prev = *upper_body_bbox(dp);
  for (int i = 0; i < 200; ++i) {
    dp.part[dp.index(uy(rng), ux(rng))] = dp_part::kTorsoBack;
    const auto now = *upper_body_bbox(dp);
    ASSERT_TRUE(now.x0 <= prev.x0 && now.y0 <= prev.y0 && now.x1 >= prev.x1 && now.y1 >= prev.y1);
    prev = now;
  }
  EXPECT_EQ(upper_body_bbox(dp), scan());
}

TEST(UpperBodyBox, RoiFromBoxPadsLongestSide) {
  const auto r = roi_from_bbox({10, 20, 29, 59}, 0.15, 512);
  EXPECT_DOUBLE_EQ(r.center_x, 20.0);
  EXPECT_DOUBLE_EQ(r.center_y, 40.0);
  EXPECT_DOUBLE_EQ(r.source_side, 40 * 1.3);
  EXPECT_EQ(r.target_side, 512);
}
