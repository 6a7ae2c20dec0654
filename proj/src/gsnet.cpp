#include "tryon/gsnet.hpp"

#include "tryon/checkpoint.hpp"
#include "tryon/error.hpp"

namespace tryon {
using nlohmann::json;

GsConfig GsConfig::production(RepresentationMode mode) {
  GsConfig c;
  c.mode = mode;
  c.arch.input_channels = channels_for(mode);
  return c;
}

GsConfig GsConfig::tiny(RepresentationMode mode) {
  GsConfig c;
  c.mode = mode;
  c.arch = {channels_for(mode), 8, 1, 1, 8, 2, 2};
  return c;
}

json GsConfig::to_json() const {
  return {{"mode", std::string(to_string(mode))},
          {"input_channels", arch.input_channels},
          {"ngf", arch.ngf},
          {"n_down", arch.n_down},
          {"n_blocks", arch.n_blocks},
          {"ndf", arch.ndf},
          {"d_layers", arch.d_layers},
          {"num_d", arch.num_d},
          {"gan", gan == nn::GanMode::Log ? "log" : "lsgan"},
          {"init_seed", init_seed}};
}

GsConfig GsConfig::from_json(const json& j) {
  GsConfig c;
  try {
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.arch.input_channels = j.at("input_channels").get<int>();
    c.arch.ngf = j.at("ngf").get<int>();
    c.arch.n_down = j.at("n_down").get<int>();
    c.arch.n_blocks = j.at("n_blocks").get<int>();
    c.arch.ndf = j.at("ndf").get<int>();
    c.arch.d_layers = j.at("d_layers").get<int>();
    c.arch.num_d = j.at("num_d").get<int>();
    const auto gan = j.value("gan", std::string("log"));
    if (gan != "log" && gan != "lsgan") throw ConfigError("unknown GAN mode '" + gan + "'");
    c.gan = gan == "log" ? nn::GanMode::Log : nn::GanMode::LeastSquares;
    c.init_seed = j.value("init_seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed network config: ") + e.what());
  }
  return c;
}

GsNetwork::GsNetwork(const GsConfig& config) : config_(config) {
  const auto& a = config.arch;
  if (a.input_channels != channels_for(config.mode))
    throw ConfigError("mode " + std::string(to_string(config.mode)) + " needs " +
                      std::to_string(channels_for(config.mode)) + " input channels, config has " +
                      std::to_string(a.input_channels));
  if (a.ngf <= 0 || a.n_down < 0 || a.n_blocks < 0 || a.ndf <= 0 || a.d_layers < 1 || a.num_d < 1)
    throw ConfigError("invalid network architecture");
  std::mt19937_64 rng(config.init_seed);
  generator_ = std::make_unique<nn::Generator<float>>(a, rng);
  discriminator_ = std::make_unique<nn::MultiScaleDiscriminator<float>>(a, rng);
}

GsOutput GsNetwork::forward(const HybridRepresentation& rep) {
  if (rep.mode != config_.mode)
    throw InputError("network trained for mode " + std::string(to_string(config_.mode)) + " got a " +
                     std::string(to_string(rep.mode)) + " representation");
  return forward(rep.data);
}

GsOutput GsNetwork::forward(const Image& rep) {
  if (rep.channels() != config_.arch.input_channels)
    throw InputError("network for mode " + std::string(to_string(config_.mode)) + " expects " +
                     std::to_string(config_.arch.input_channels) + " channels, got " + std::to_string(rep.channels()));
  const int div = 1 << config_.arch.n_down;
  if (rep.height() % div != 0 || rep.width() % div != 0)
    throw InputError("input side must be a multiple of " + std::to_string(div));
  const auto out = forward_batch(to_tensor(rep));
  return {to_image(out, 0, 0, 3), SoftMask::from_image(to_image(out, 0, 3, 1))};
}

nn::Tensor<float> GsNetwork::forward_batch(const nn::Tensor<float>& rep) {
  nn::Tensor<float> x = rep;
  to_signed_range(x);
  std::lock_guard lock(mu_);
  return generator_->forward(x);
}

void to_signed_range(nn::Tensor<float>& t) {
  for (auto& v : t.data) v = 2.0f * v - 1.0f;
}

nn::Tensor<float> to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) return {};
  const Image& f = *images.front();
  nn::Tensor<float> t(static_cast<int>(images.size()), f.channels(), f.height(), f.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = *images[i];
    if (im.channels() != f.channels() || im.height() != f.height() || im.width() != f.width())
      throw InputError("batch images differ in shape");
    std::copy(im.data().begin(), im.data().end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

nn::Tensor<float> to_tensor(const Image& image) { return to_tensor(std::vector<const Image*>{&image}); }

Image to_image(const nn::Tensor<float>& t, int sample, int first_channel, int channels) {
  Image out(channels, t.h, t.w);
  const float* src = t.channel(sample, first_channel);
  std::copy(src, src + static_cast<std::size_t>(channels) * t.plane(), out.data().begin());
  return out;
}

std::unique_ptr<nn::VggExtractor<float>> load_vgg_extractor(const std::filesystem::path& path) {
  TensorArchive archive;
  try {
    archive = TensorArchive::load(path);
  } catch (const InputError& e) {
    throw ConfigError(std::string("perceptual backbone unavailable: ") + e.what());
  }
  std::mt19937_64 rng(0);
  auto vgg = std::make_unique<nn::VggExtractor<float>>(rng);
  auto& convs = vgg->convs();
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const std::string w = "conv" + std::to_string(i) + ".weight", b = "conv" + std::to_string(i) + ".bias";
    if (!archive.contains(w) || !archive.contains(b)) throw ConfigError("perceptual backbone file lacks " + w);
    const auto& wv = archive.f32(w);
    const auto& bv = archive.f32(b);
    if (wv.size() != convs[i]->weight().value.size() || bv.size() != convs[i]->bias().value.size())
      throw ConfigError("perceptual backbone tensor " + w + " has the wrong size");
    convs[i]->weight().value = wv;
    convs[i]->bias().value = bv;
  }
  return vgg;
}

}  // namespace tryon
