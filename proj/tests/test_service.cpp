#include <gtest/gtest.h>

#include "support.hpp"
#include "tryon/error.hpp"
#include "tryon/png_io.hpp"
#include "tryon/service.hpp"
#include "tryon/websocket.hpp"

// After the project headers: resolv.h, pulled in here, defines a macro that collides with Eigen.
#include <httplib.h>

using namespace tryon;
using nlohmann::json;

namespace {

constexpr std::array<float, 3> kRed{1, 0, 0}, kBlue{0, 0, 1}, kGreen{0, 1, 0};

GarmentCatalog colours() {
  GarmentCatalog c;
  for (const auto& [id, col] : {std::pair{"red", kRed}, std::pair{"blue", kBlue}, std::pair{"green", kGreen}}) {
    GarmentCatalogEntry e;
    e.garment_id = id;
    c.add(e, std::make_shared<ConstantSynthesizer>(col, 1.0f));
  }
  return c;
}

std::string colour_of(const Image& img) {
  int r = 0, b = 0, g = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const std::array<float, 3> px{img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)};
      r += px == kRed;
      b += px == kBlue;
      g += px == kGreen;
    }
  if (r && !b && !g) return "red";
  if (b && !r && !g) return "blue";
  if (g && !r && !b) return "green";
  return "mixed";
}

std::vector<Image> frames(int n) {
  synthetic::CaptureConfig cap;
  cap.frames = n;
  cap.width = 120;
  cap.height = 160;
  return synthetic::make_capture(cap);
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceOptions o;
    o.http_port = 0;
    service_ = std::make_unique<TryOnService>(colours(), BackendConfig{}, o);
    service_->start();
    http_ = std::make_unique<httplib::Client>("127.0.0.1", service_->http_port());
  }
  void TearDown() override { service_->stop(); }

  // Sends one frame and waits for its result, so nothing is dropped.
  FrameMessage round_trip(FrameSocketClient& client, std::uint64_t id, const Image& img) {
    client.send(id, img);
    auto m = client.receive(20000);
    EXPECT_TRUE(m);
    return m ? std::move(*m) : FrameMessage{};
  }
  int select(const std::string& body) {
    auto res = http_->Post("/garments/select", body, "application/json");
    return res ? res->status : -1;
  }

  std::unique_ptr<TryOnService> service_;
  std::unique_ptr<httplib::Client> http_;
};

}  // namespace

TEST(FrameMessage, RoundTrip) {
  std::mt19937_64 rng(1);
  const Image img = tryon::testing::random_image(rng, 3, 9, 14, true);
  const std::string bytes = encode_frame_message(0x0102030405060708ull, img);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x08);  // little-endian id
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 14);    // width
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 9);    // height
  const auto m = decode_frame_message(bytes);
  EXPECT_EQ(m.frame_id, 0x0102030405060708ull);
  EXPECT_EQ(m.image, img);
}

TEST(FrameMessage, MalformedRejected) {
  EXPECT_THROW(decode_frame_message("short"), InputError);
  std::string bytes = encode_frame_message(1, Image(3, 4, 4));
  EXPECT_THROW(decode_frame_message(bytes.substr(0, 20)), InputError);
  bytes[8] = 5;  // header width disagrees with the PNG
  EXPECT_THROW(decode_frame_message(bytes), InputError);
}

TEST(FrameSocket, EchoesThroughServer) {
  FrameSocketServer* self = nullptr;
  FrameSocketServer server("127.0.0.1", 0, [&](FrameMessage m) { self->send(m.frame_id + 100, m.image); });
  self = &server;
  FrameSocketClient client("127.0.0.1", server.port());
  std::mt19937_64 rng(2);
  for (std::uint64_t i = 0; i < 3; ++i) {
    const Image img = tryon::testing::random_image(rng, 3, 6, 5, true);
    client.send(i, img);
    const auto m = client.receive();
    ASSERT_TRUE(m);
    EXPECT_EQ(m->frame_id, i + 100);
    EXPECT_EQ(m->image, img);
  }
  client.close();
  server.stop();
}

TEST(PushSource, StaleFramesDiscarded) {
  PushFrameSource s(0);
  EXPECT_TRUE(s.push({3, Image(3, 2, 2)}));
  EXPECT_FALSE(s.push({3, Image(3, 2, 2)}));
  EXPECT_FALSE(s.push({1, Image(3, 2, 2)}));
  EXPECT_TRUE(s.push({4, Image(3, 2, 2)}));
  s.close();
  EXPECT_EQ(s.next()->id, 3u);
  EXPECT_EQ(s.next()->id, 4u);
  EXPECT_FALSE(s.next());
}

TEST_F(ServiceTest, GarmentListAndStats) {
  auto res = http_->Get("/garments");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j.at("garments").size(), 3u);
  EXPECT_EQ(j.at("selected"), "red");
  auto stats = http_->Get("/stats");
  ASSERT_TRUE(stats);
  EXPECT_EQ(stats->status, 200);
  EXPECT_TRUE(json::parse(stats->body).contains("fps"));
  auto missing = http_->Get("/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

TEST_F(ServiceTest, SelectValidatesInput) {
  EXPECT_EQ(select("not json"), 400);
  EXPECT_EQ(select(R"({"id": "blue"})"), 400);
  EXPECT_EQ(select(R"({"garment_id": "purple"})"), 404);
  EXPECT_EQ(select(R"({"garment_id": "blue"})"), 200);
  EXPECT_EQ(service_->selection().current()->entry.garment_id, "blue");
}

TEST_F(ServiceTest, SelectionReachesStreamWithinTwoFrames) {
  FrameSocketClient client("127.0.0.1", service_->socket_port());
  const auto in = frames(12);
  for (std::uint64_t i = 0; i < 4; ++i) {
    const auto m = round_trip(client, i, in[i]);
    EXPECT_EQ(m.frame_id, i);
    EXPECT_EQ(colour_of(m.image), "red") << i;
  }
  ASSERT_EQ(select(R"({"garment_id": "blue"})"), 200);
  std::vector<std::string> after;
  for (std::uint64_t i = 4; i < 8; ++i) after.push_back(colour_of(round_trip(client, i, in[i]).image));
  // At most two frames already in flight may still carry the old garment.
  for (std::size_t k = 2; k < after.size(); ++k) EXPECT_EQ(after[k], "blue") << k;
  for (const auto& c : after) EXPECT_NE(c, "mixed");

  // Rapid double switch: the last request wins.
  ASSERT_EQ(select(R"({"garment_id": "red"})"), 200);
  ASSERT_EQ(select(R"({"garment_id": "green"})"), 200);
  std::vector<std::string> last;
  for (std::uint64_t i = 8; i < 12; ++i) last.push_back(colour_of(round_trip(client, i, in[i]).image));
  for (std::size_t k = 2; k < last.size(); ++k) EXPECT_EQ(last[k], "green") << k;
  for (const auto& c : last) EXPECT_NE(c, "mixed");
}

TEST(Service, MissingBackendFailsAtStart) {
  BackendConfig b;
  b.pose = "external";
  b.adapter_dir = "/nonexistent";
  ServiceOptions o;
  o.http_port = 0;
  TryOnService s(colours(), b, o);
  EXPECT_THROW(s.start(), BackendError);
}
