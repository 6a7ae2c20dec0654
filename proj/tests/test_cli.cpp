#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "tryon/cli.hpp"

using namespace tryon;
using nlohmann::json;
using tryon::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
  // First stderr line: the resolved configuration.
  json echo() const { return json::parse(err.substr(0, err.find('\n'))); }
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tryon");
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("build-dataset"), std::string::npos);
  EXPECT_EQ(run({"train", "--help"}).code, kExitOk);
}

TEST(Cli, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run({}).code, kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(run({"capture-guide", "--out", "/tmp/x", "--no-such-flag"}).code, kExitConfig);
  EXPECT_EQ(run({"capture-guide"}).code, kExitConfig);  // --out is required
  EXPECT_EQ(run({"train", "--dataset", "d", "--out", "o", "--epochs", "many"}).code, kExitConfig);
  EXPECT_EQ(run({"--log-level", "loud", "capture-guide", "--out", "/tmp/x"}).code, kExitConfig);
}

TEST(Cli, MissingVideoIsInputErrorNamingThePath) {
  TempDir dir;
  const auto r = run({"build-dataset", "--video", "/nonexistent/capture", "--out", (dir / "ds").string(),
                      "--garment-id", "g"});
  EXPECT_EQ(r.code, kExitInput);
  EXPECT_NE(r.err.find("/nonexistent/capture"), std::string::npos);
  const json last = json::parse(r.err.substr(r.err.rfind('{', r.err.rfind("\"error\""))));
  EXPECT_EQ(last.at("error").at("kind"), "input");
}

TEST(Cli, MissingBackendIsBackendError) {
  TempDir dir;
  tryon::testing::write_video(dir / "v", {Image(3, 16, 16)});
  const auto r = run({"build-dataset", "--video", (dir / "v").string(), "--out", (dir / "ds").string(), "--garment-id",
                      "g", "--pose-backend", "external", "--backend-dir", "/nonexistent"});
  EXPECT_EQ(r.code, kExitBackend);
}

TEST(Cli, EchoedConfigReplaysIdentically) {
  TempDir dir;
  const auto first = run({"capture-guide", "--out", (dir / "a").string(), "--duration", "60"});
  ASSERT_EQ(first.code, kExitOk) << first.err;
  const json echo = first.echo();
  EXPECT_EQ(echo.at("duration_s"), 60.0);
  std::ofstream(dir / "cfg.json") << echo.dump();
  const auto second = run({"capture-guide", "--config", (dir / "cfg.json").string()});
  ASSERT_EQ(second.code, kExitOk) << second.err;
  EXPECT_EQ(second.echo(), echo);
  // Flags override the file.
  EXPECT_EQ(run({"capture-guide", "--config", (dir / "cfg.json").string(), "--duration", "90"}).echo().at("duration_s"),
            90.0);
  std::ofstream(dir / "bad.json") << R"({"subcommand": "train"})";
  EXPECT_EQ(run({"capture-guide", "--config", (dir / "bad.json").string()}).code, kExitConfig);
  std::ofstream(dir / "unknown.json") << R"({"out": "x", "colour": 1})";
  EXPECT_EQ(run({"capture-guide", "--config", (dir / "unknown.json").string()}).code, kExitConfig);
}

TEST(Cli, CaptureGuideWritesOnlyUnderOut) {
  TempDir dir;
  const auto r = run({"capture-guide", "--out", (dir / "guide").string()});
  ASSERT_EQ(r.code, kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), dir / "guide");
    EXPECT_FALSE(rel.empty() || rel.string().starts_with("..")) << e.path();
  }
  EXPECT_EQ(files, 1u);
  std::ifstream in(dir / "guide" / "guide.json");
  const json guide = json::parse(in);
  EXPECT_EQ(json::parse(r.out).at("poses"), 14);
  EXPECT_FALSE(guide.empty());
}

TEST(Cli, BuildValidateTrainInferPipeline) {
  TempDir dir;
  synthetic::CaptureConfig cap;
  cap.frames = 10;
  tryon::testing::write_video(dir / "capture", synthetic::make_capture(cap), 30.0);

  const auto build = run({"build-dataset", "--video", (dir / "capture").string(), "--out", (dir / "ds").string(),
                          "--garment-id", "toy", "--roi-side", "32"});
  ASSERT_EQ(build.code, kExitOk) << build.err;
  EXPECT_EQ(json::parse(build.out).at("records"), 10);

  const auto validate = run({"validate-dataset", "--dataset", (dir / "ds").string()});
  ASSERT_EQ(validate.code, kExitOk) << validate.err;

  const auto train = run({"train", "--dataset", (dir / "ds").string(), "--out", (dir / "run").string(), "--arch",
                          "tiny", "--roi-side", "32", "--epochs", "1", "--batch", "4", "--mode", "vm"});
  ASSERT_EQ(train.code, kExitOk) << train.err;
  const json trained = json::parse(train.out);
  const std::string ckpt = trained.at("checkpoint");
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(trained.contains("holdout"));
  EXPECT_EQ(train.echo().at("batch_size"), 4);

  const auto infer = run({"infer-video", "--in", (dir / "capture").string(), "--out", (dir / "out").string(),
                          "--garment", ckpt});
  ASSERT_EQ(infer.code, kExitOk) << infer.err;
  EXPECT_EQ(json::parse(infer.out).at("frames"), 10);

  const auto eval = run({"evaluate", "--pred", (dir / "out").string(), "--gt", (dir / "capture").string()});
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  EXPECT_EQ(json::parse(eval.out).at("metrics").size(), 2u);

  // Damage one mask: validation now fails as an input error.
  fs::remove(dir / "ds" / load_manifest(dir / "ds").records[0].mask_path);
  EXPECT_EQ(run({"validate-dataset", "--dataset", (dir / "ds").string()}).code, kExitInput);
}
