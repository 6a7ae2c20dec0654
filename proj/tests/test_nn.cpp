#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "support.hpp"
#include "tryon/checkpoint.hpp"
#include "tryon/error.hpp"
#include "tryon/gsnet.hpp"
#include "tryon/nn/adam.hpp"
#include "tryon/nn/losses.hpp"
#include "tryon/nn/models.hpp"

using namespace tryon;
using namespace tryon::nn;
using D = double;

namespace {

Tensor<D> random_tensor(std::mt19937_64& rng, int n, int c, int h, int w, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<D> t(n, c, h, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}

struct GradError {
  double params = 0;
  double input = 0;
};

// Central differences of L = <w, m(x)> against backward(), over every parameter and input
// entry. Entries whose true gradient vanishes (biases ahead of a norm) are skipped.
GradError grad_check(Module<D>& m, Tensor<D> x, std::mt19937_64& rng) {
  const Tensor<D> probe = m.forward(x);
  const Tensor<D> w = random_tensor(rng, probe.n, probe.c, probe.h, probe.w);
  auto loss = [&] {
    const Tensor<D> y = m.forward(x);
    double s = 0;
    for (std::size_t k = 0; k < y.size(); ++k) s += w.data[k] * y.data[k];
    return s;
  };
  auto rel = [](double num, double ana) {
    const double scale = std::max(std::abs(num), std::abs(ana));
    return scale < 1e-7 ? 0.0 : std::abs(num - ana) / scale;
  };
  m.zero_grad();
  loss();
  const Tensor<D> dx = m.backward(w);
  GradError e;
  const double h = 1e-6;
  for (auto& [name, p] : m.parameters())
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss();
      p->value[i] = keep - h;
      const double lm = loss();
      p->value[i] = keep;
      e.params = std::max(e.params, rel((lp - lm) / (2 * h), p->grad[i]));
    }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double lp = loss();
    x.data[i] = keep - h;
    const double lm = loss();
    x.data[i] = keep;
    e.input = std::max(e.input, rel((lp - lm) / (2 * h), dx.data[i]));
  }
  return e;
}

template <class M>
void expect_gradients(M& m, const Tensor<D>& x, std::mt19937_64& rng) {
  const GradError e = grad_check(m, x, rng);
  EXPECT_LT(e.params, 1e-5);
  EXPECT_LT(e.input, 1e-5);
}

}  // namespace

// --- layers ----------------------------------------------------------------------------

TEST(Layers, ConvMatchesDirectSum) {
  std::mt19937_64 rng(1);
  Conv2d<D> conv(2, 3, 3, 2, 1, rng, 0.5);
  const Tensor<D> x = random_tensor(rng, 1, 2, 7, 6);
  const Tensor<D> y = conv.forward(x);
  ASSERT_EQ(y.shape_string(), "[1,3,4,3]");
  const auto& W = conv.weight().value;
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < y.h; ++oy)
      for (int ox = 0; ox < y.w; ++ox) {
        double s = conv.bias().value[o];
        for (int i = 0; i < 2; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy >= 0 && ix >= 0 && iy < 7 && ix < 6) s += W[((o * 2 + i) * 3 + ky) * 3 + kx] * x.at(0, i, iy, ix);
            }
        ASSERT_NEAR(y.at(0, o, oy, ox), s, 1e-12);
      }
}

TEST(Layers, TransposedConvMatchesScatterDefinition) {
  std::mt19937_64 rng(2);
  ConvTranspose2d<D> up(2, 3, 3, 2, 1, 1, rng, 0.5);
  const Tensor<D> x = random_tensor(rng, 2, 2, 4, 5);
  const Tensor<D> y = up.forward(x);
  ASSERT_EQ(y.shape_string(), "[2,3,8,10]");
  std::vector<double> w;
  for (auto& [n, p] : up.parameters())
    if (n == "weight") w = p->value;
  Tensor<D> want(2, 3, 8, 10);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 2; ++i)
      for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 5; ++ix)
          for (int o = 0; o < 3; ++o)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int oy = iy * 2 - 1 + ky, ox = ix * 2 - 1 + kx;
                if (oy >= 0 && ox >= 0 && oy < 8 && ox < 10)
                  want.at(b, o, oy, ox) += w[((i * 3 + o) * 3 + ky) * 3 + kx] * x.at(b, i, iy, ix);
              }
  std::vector<double> bias;
  for (auto& [n, p] : up.parameters())
    if (n == "bias") bias = p->value;
  for (int b = 0; b < 2; ++b)
    for (int o = 0; o < 3; ++o)
      for (int k = 0; k < 80; ++k) ASSERT_NEAR(y.channel(b, o)[k], want.channel(b, o)[k] + bias[o], 1e-12);
}

TEST(Layers, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  {
    Conv2d<D> m(2, 3, 3, 1, 1, rng, 0.5);
    expect_gradients(m, random_tensor(rng, 2, 2, 5, 5), rng);
  }
  {
    Conv2d<D> m(2, 2, 4, 2, 2, rng, 0.5);
    expect_gradients(m, random_tensor(rng, 1, 2, 6, 7), rng);
  }
  {
    ConvTranspose2d<D> m(3, 2, 3, 2, 1, 1, rng, 0.5);
    expect_gradients(m, random_tensor(rng, 2, 3, 3, 4), rng);
  }
  {
    InstanceNorm<D> m;
    expect_gradients(m, random_tensor(rng, 2, 2, 4, 4), rng);
  }
  {
    ReflectionPad2d<D> m(2);
    expect_gradients(m, random_tensor(rng, 1, 2, 4, 5), rng);
  }
  {
    Tanh<D> m;
    expect_gradients(m, random_tensor(rng, 1, 2, 3, 3), rng);
  }
  {
    LeakyReLU<D> m(0.2);
    expect_gradients(m, random_tensor(rng, 1, 2, 3, 3), rng);
  }
  {
    Upsample2x<D> m;
    expect_gradients(m, random_tensor(rng, 1, 2, 3, 3), rng);
  }
  {
    AvgPoolDown<D> m;
    expect_gradients(m, random_tensor(rng, 1, 2, 5, 6), rng);
  }
  {
    MaxPool2x<D> m;
    expect_gradients(m, random_tensor(rng, 1, 2, 4, 6), rng);
  }
  {
    GarmentMaskHead<D> m;
    expect_gradients(m, random_tensor(rng, 2, 4, 3, 3), rng);
  }
  {
    ResidualBlock<D> m(3, rng);
    for (auto& [n, p] : m.parameters())
      for (auto& v : p->value) v *= 20;
    expect_gradients(m, random_tensor(rng, 1, 3, 4, 4), rng);
  }
}

TEST(Layers, GeneratorGradients) {
  std::mt19937_64 rng(4);
  Generator<D> g({6, 4, 1, 1, 4, 2, 2}, rng);
  for (auto& [n, p] : g.parameters())
    for (auto& v : p->value) v *= 10;
  const GradError e = grad_check(g, random_tensor(rng, 1, 6, 8, 8), rng);
  EXPECT_LT(e.params, 1e-4);
  EXPECT_LT(e.input, 1e-4);
}

TEST(Layers, GarmentMaskHeadBounds) {
  GarmentMaskHead<D> head;
  Tensor<D> x(1, 4, 1, 3);
  x.data = {-50, 0, 50, -50, 0, 50, -50, 0, 50, -50, 0, 50};
  const auto y = head.forward(x);
  for (double v : y.data) EXPECT_TRUE(v >= 0 && v <= 1);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(y.at(0, 3, 0, 1), 0.5);
}

// --- optimizer -------------------------------------------------------------------------

TEST(Adam, FirstStepMovesByLearningRate) {
  Param<D> p(2);
  p.value = {1.0, -2.0};
  Adam<D> opt({{"p", &p}}, {0.01, 0.5, 0.999, 1e-8});
  p.grad = {3.0, -0.001};
  opt.step();
  EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-6);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01, 1e-6);
}

TEST(Adam, MinimisesQuadratic) {
  Param<D> p(1);
  Adam<D> opt({{"p", &p}}, {0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    p.grad[0] = 2 * (p.value[0] - 3.0);
    opt.step();
  }
  EXPECT_NEAR(p.value[0], 3.0, 1e-3);
  EXPECT_EQ(opt.steps(), 2000);
}

// --- losses ----------------------------------------------------------------------------

TEST(GanLoss, HandValues) {
  const std::vector<double> half{0.5}, one{1.0}, zero{0.0}, p8{0.8}, p3{0.3};
  EXPECT_NEAR(gan_loss(half, half).l_gan, -1.3863, 1e-4);
  EXPECT_NEAR(gan_loss(one, zero).l_gan, 0.0, 1e-4);
  EXPECT_NEAR(gan_loss(p8, p3).l_gan, -0.5798, 1e-4);
  EXPECT_NEAR(gan_loss(p8, p3).for_d, 0.5798, 1e-4);
  EXPECT_NEAR(gan_loss(p8, p3).for_gs, std::log(0.7), 1e-12);
  EXPECT_TRUE(std::isfinite(gan_loss(zero, one).l_gan));
}

TEST(GanLoss, LogitTermsAgreeWithProbabilityForm) {
  std::vector<Tensor<D>> real{Tensor<D>(1, 1, 2, 2, 0.3)}, fake{Tensor<D>(1, 1, 2, 2, -1.1)};
  const auto t = gan_terms(real, fake, GanMode::Log);
  const std::vector<double> pr{sigmoid(0.3)}, pf{sigmoid(-1.1)};
  EXPECT_NEAR(t.values.l_gan, gan_loss(pr, pf).l_gan, 1e-12);
  EXPECT_NEAR(t.values.for_gs, gan_loss(pr, pf).for_gs, 1e-12);
}

TEST(FeatureMatching, HandCases) {
  FeatureSet<D> real{{Tensor<D>(1, 1, 1, 2, 0.0), Tensor<D>(1, 1, 1, 1)}};
  FeatureSet<D> fake{{Tensor<D>(1, 1, 1, 2, 1.0), Tensor<D>(1, 1, 1, 1)}};
  EXPECT_DOUBLE_EQ(feature_matching(real, fake).value, 1.0);
  EXPECT_DOUBLE_EQ(feature_matching(real, real).value, 0.0);
}

TEST(FeatureMatching, HomogeneousAndMismatchRejected) {
  std::mt19937_64 rng(5);
  FeatureSet<D> real{{random_tensor(rng, 1, 2, 3, 3), random_tensor(rng, 1, 1, 2, 2), Tensor<D>(1, 1, 1, 1)}};
  FeatureSet<D> fake{{random_tensor(rng, 1, 2, 3, 3), random_tensor(rng, 1, 1, 2, 2), Tensor<D>(1, 1, 1, 1)}};
  const double base = feature_matching(real, fake).value;
  EXPECT_GT(base, 0);
  for (auto* set : {&real, &fake})
    for (auto& t : (*set)[0])
      for (auto& v : t.data) v *= 2.5;
  EXPECT_NEAR(feature_matching(real, fake).value, 2.5 * base, 1e-12);
  fake[0].pop_back();
  EXPECT_THROW(feature_matching(real, fake), InputError);
}

TEST(Perceptual, IdentityExtractorCases) {
  IdentityExtractor<D> id;
  const Tensor<D> ones(1, 3, 2, 2, 1.0), zeros3(1, 3, 2, 2, 0.0), mask1(1, 1, 2, 2, 1.0), mask0(1, 1, 2, 2, 0.0);
  std::mt19937_64 rng(6);
  const Tensor<D> pred = random_tensor(rng, 1, 3, 2, 2, 0, 1);
  EXPECT_DOUBLE_EQ(perceptual_loss(pred, mask1, pred, id).value, 0.0);
  EXPECT_DOUBLE_EQ(perceptual_loss(ones, mask1, zeros3, id).value, 1.0);
  EXPECT_DOUBLE_EQ(perceptual_loss(pred, mask0, zeros3, id).value, 0.0);
  EXPECT_THROW(perceptual_loss(ones, Tensor<D>(1, 1, 3, 3), zeros3, id), InputError);
}

TEST(Objective, WeightsAreLinear) {
  LossBreakdown p;
  p.gan = -0.7;
  p.fm = 0.3;
  p.vgg = 0.2;
  p.discriminator = 1.1;
  EXPECT_NEAR(total_objective(p).generator, -0.7 + 0.3 + 0.2, 1e-12);
  EXPECT_DOUBLE_EQ(total_objective(p).discriminator, 1.1);
  auto q = p;
  q.lambda0 = q.lambda1 = 0;
  EXPECT_DOUBLE_EQ(total_objective(q).generator, -0.7);
  auto r = p;
  r.lambda0 = 2;
  EXPECT_NEAR(total_objective(r).generator - total_objective(p).generator, p.fm, 1e-12);
  r.lambda1 = -1;
  EXPECT_THROW(total_objective(r), ConfigError);
}

TEST(Objective, NonAdversarialTermsNonNegative) {
  std::mt19937_64 rng(7);
  IdentityExtractor<D> id;
  for (int i = 0; i < 20; ++i) {
    FeatureSet<D> a{{random_tensor(rng, 1, 2, 2, 2), Tensor<D>(1, 1, 1, 1)}};
    FeatureSet<D> b{{random_tensor(rng, 1, 2, 2, 2), Tensor<D>(1, 1, 1, 1)}};
    EXPECT_GE(feature_matching(a, b).value, 0);
    EXPECT_GE(perceptual_loss(random_tensor(rng, 1, 3, 2, 2), random_tensor(rng, 1, 1, 2, 2, 0, 1),
                              random_tensor(rng, 1, 3, 2, 2), id)
                  .value,
              0);
  }
}

// --- garment synthesis network ---------------------------------------------------------

TEST(GsNet, OutputContract) {
  GsNetwork net(GsConfig::tiny(RepresentationMode::Hybrid));
  const auto out = net.forward(Image(6, 32, 32));
  EXPECT_EQ(out.garment.channels(), 3);
  EXPECT_EQ(out.garment.height(), 32);
  EXPECT_EQ(out.mask.height(), 32);
  for (float v : out.garment.data()) ASSERT_TRUE(std::isfinite(v) && v >= 0 && v <= 1);
  for (float v : out.mask.data()) ASSERT_TRUE(std::isfinite(v) && v >= 0 && v <= 1);
}

TEST(GsNet, DeterministicInEvaluation) {
  std::mt19937_64 rng(8);
  GsNetwork net(GsConfig::tiny(RepresentationMode::Hybrid));
  const Image x = tryon::testing::random_image(rng, 6, 16, 16);
  const auto a = net.forward(x), b = net.forward(x);
  EXPECT_EQ(a.garment, b.garment);
  EXPECT_EQ(a.mask, b.mask);
  GsNetwork twin(GsConfig::tiny(RepresentationMode::Hybrid));
  EXPECT_EQ(twin.forward(x).garment, a.garment);
}

TEST(GsNet, ShapeEquivariant256And512) {
  GsNetwork net(GsConfig::tiny(RepresentationMode::Hybrid));
  for (int side : {256, 512}) {
    const auto out = net.forward(Image(6, side, side, 0.5f));
    EXPECT_EQ(out.garment.height(), side);
    EXPECT_EQ(out.garment.width(), side);
    EXPECT_EQ(out.mask.width(), side);
  }
}

TEST(GsNet, ProductionPresetShapes) {
  const auto cfg = GsConfig::production(RepresentationMode::Hybrid);
  EXPECT_EQ(cfg.arch.ngf, 64);
  EXPECT_EQ(cfg.arch.n_blocks, 9);
  EXPECT_EQ(cfg.arch.num_d, 2);
  GsNetwork net(cfg);
  const auto out = net.forward(Image(6, 32, 32));
  EXPECT_EQ(out.garment.height(), 32);
}

TEST(GsNet, ModeChannelsEnforced) {
  for (auto mode : {RepresentationMode::VM, RepresentationMode::SDP}) {
    GsNetwork net(GsConfig::tiny(mode));
    EXPECT_NO_THROW(net.forward(Image(3, 16, 16)));
    EXPECT_THROW(net.forward(Image(6, 16, 16)), InputError);
    EXPECT_THROW(net.forward(HybridRepresentation{RepresentationMode::Hybrid, Image(6, 16, 16)}), InputError);
  }
  GsNetwork vmdp(GsConfig::tiny(RepresentationMode::VMDP));
  EXPECT_THROW(vmdp.forward(Image(3, 16, 16)), InputError);
}

TEST(GsNet, ConfigJsonRoundTrip) {
  auto c = GsConfig::tiny(RepresentationMode::VMDP);
  c.gan = GanMode::LeastSquares;
  c.init_seed = 9;
  EXPECT_EQ(GsConfig::from_json(c.to_json()).to_json(), c.to_json());
  auto bad = c.to_json();
  bad["gan"] = "wasserstein";
  EXPECT_THROW(GsConfig::from_json(bad), ConfigError);
}

TEST(GsNet, MissingVggWeightsIsConfigError) {
  EXPECT_THROW(load_vgg_extractor("/nonexistent/vgg.bin"), ConfigError);
}

// --- checkpoints -----------------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesOutputsAndStamp) {
  std::mt19937_64 rng(9);
  tryon::testing::TempDir dir;
  auto cfg = GsConfig::tiny(RepresentationMode::VM);
  cfg.init_seed = 4;
  GsNetwork net(cfg);
  TrainingStamp stamp;
  stamp.step = 17;
  stamp.epoch = 2;
  stamp.manifest_hash = "abc";
  stamp.state = {{"k", 1}};
  save_checkpoint(dir / "a.ckpt", net, stamp);
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.network->mode(), RepresentationMode::VM);
  EXPECT_EQ(loaded.stamp.step, 17);
  EXPECT_EQ(loaded.stamp.epoch, 2);
  EXPECT_EQ(loaded.stamp.manifest_hash, "abc");
  EXPECT_EQ(loaded.stamp.state, stamp.state);
  const Image x = tryon::testing::random_image(rng, 3, 16, 16);
  EXPECT_EQ(loaded.network->forward(x).garment, net.forward(x).garment);
}

TEST(Checkpoint, ModeStampMustMatchFirstLayer) {
  tryon::testing::TempDir dir;
  GsNetwork net(GsConfig::tiny(RepresentationMode::Hybrid));
  save_checkpoint(dir / "a.ckpt", net, {});
  auto archive = TensorArchive::load(dir / "a.ckpt");
  archive.meta["mode"] = "vm";
  archive.save(dir / "b.ckpt");
  EXPECT_THROW(load_checkpoint(dir / "b.ckpt"), ConfigError);
  archive.meta["config"]["mode"] = "vm";
  archive.save(dir / "c.ckpt");
  EXPECT_THROW(load_checkpoint(dir / "c.ckpt"), ConfigError);
}

TEST(Checkpoint, CorruptFilesRejected) {
  tryon::testing::TempDir dir;
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), InputError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), InputError);
  GsNetwork net(GsConfig::tiny(RepresentationMode::Hybrid));
  save_checkpoint(dir / "a.ckpt", net, {});
  std::filesystem::resize_file(dir / "a.ckpt", std::filesystem::file_size(dir / "a.ckpt") - 10);
  EXPECT_THROW(load_checkpoint(dir / "a.ckpt"), InputError);
}

TEST(Checkpoint, ArchiveKeepsBothPrecisions) {
  tryon::testing::TempDir dir;
  TensorArchive a;
  a.meta["x"] = 3;
  a.put("f", std::vector<float>{1.5f, -2.0f});
  a.put("d", std::vector<double>{0.1, 1e300});
  a.save(dir / "t.bin");
  const auto b = TensorArchive::load(dir / "t.bin");
  EXPECT_EQ(b.meta["x"], 3);
  EXPECT_EQ(b.f32("f"), (std::vector<float>{1.5f, -2.0f}));
  EXPECT_EQ(b.f64("d"), (std::vector<double>{0.1, 1e300}));
  EXPECT_THROW(b.f32("d"), InputError);
}
