#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include <nlohmann/json.hpp>

#include "tryon/image.hpp"
#include "tryon/nn/losses.hpp"
#include "tryon/nn/models.hpp"

namespace tryon {

struct GsConfig {
  RepresentationMode mode = RepresentationMode::Hybrid;
  nn::Architecture arch;
  nn::GanMode gan = nn::GanMode::Log;
  std::uint64_t init_seed = 0;

  /// 64 base filters, four downsamplings, nine residual blocks, two discriminator scales.
  static GsConfig production(RepresentationMode mode);
  /// Eight base filters, one downsampling, one residual block: for tests and desk-scale runs.
  static GsConfig tiny(RepresentationMode mode);

  nlohmann::json to_json() const;
  static GsConfig from_json(const nlohmann::json& j);
};

struct GsOutput {
  Image garment;
  SoftMask mask;
};

/// Generator and discriminator for one garment. forward() is serialised internally, so a
/// frozen network can be shared by several readers.
class GsNetwork {
 public:
  explicit GsNetwork(const GsConfig& config);

  const GsConfig& config() const { return config_; }
  RepresentationMode mode() const { return config_.mode; }

  /// Throws InputError if the representation does not match the network's mode.
  GsOutput forward(const HybridRepresentation& rep);
  /// Throws InputError unless `rep` has the mode's channel count.
  GsOutput forward(const Image& rep);
  /// Batched generator pass on [0,1] inputs; returns [N,4,H,W] with garment then mask.
  nn::Tensor<float> forward_batch(const nn::Tensor<float>& rep);

  nn::Generator<float>& generator() { return *generator_; }
  nn::MultiScaleDiscriminator<float>& discriminator() { return *discriminator_; }

 private:
  GsConfig config_;
  std::unique_ptr<nn::Generator<float>> generator_;
  std::unique_ptr<nn::MultiScaleDiscriminator<float>> discriminator_;
  std::mutex mu_;
};

/// [0,1] images to the generator's [-1,1] input range, in place.
void to_signed_range(nn::Tensor<float>& t);

nn::Tensor<float> to_tensor(const std::vector<const Image*>& images);
nn::Tensor<float> to_tensor(const Image& image);
Image to_image(const nn::Tensor<float>& t, int sample, int first_channel, int channels);

/// Loads VGG19 trunk weights (conv1_1 ... conv5_1) from a tensor archive with entries
/// `conv<i>.weight` / `conv<i>.bias`. Throws ConfigError if the file is missing or malformed.
std::unique_ptr<nn::VggExtractor<float>> load_vgg_extractor(const std::filesystem::path& path);

}  // namespace tryon
