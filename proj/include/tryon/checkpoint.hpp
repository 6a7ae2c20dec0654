#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tryon/gsnet.hpp"
#include "tryon/nn/adam.hpp"

namespace tryon {

inline constexpr std::uint32_t kArchiveVersion = 1;

/// Named float32/float64 arrays plus a JSON header, in one binary file:
/// "TRYONCKP", u32 version, u64 header length, header JSON, raw little-endian blobs.
class TensorArchive {
 public:
  using Blob = std::variant<std::vector<float>, std::vector<double>>;

  nlohmann::json meta = nlohmann::json::object();

  void put(const std::string& name, std::vector<float> data) { blobs_[name] = std::move(data); }
  void put(const std::string& name, std::vector<double> data) { blobs_[name] = std::move(data); }
  bool contains(const std::string& name) const { return blobs_.count(name) != 0; }
  const std::vector<float>& f32(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  /// Throws InputError on unreadable or corrupt files.
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, Blob> blobs_;
};

/// Everything needed to resume a run besides the network weights.
struct TrainingStamp {
  long long step = 0;
  int epoch = 0;
  std::string manifest_hash;
  bool final = false;
  nlohmann::json state = nlohmann::json::object();  // loss averages, config, ...
};

void save_checkpoint(const std::filesystem::path& path, GsNetwork& net, const TrainingStamp& stamp,
                     nn::Adam<float>* gen_opt = nullptr, nn::Adam<float>* disc_opt = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<GsNetwork> network;
  TrainingStamp stamp;
  TensorArchive archive;  // optimizer moments live here until restore_optimizers()
};

/// Throws ConfigError if the mode stamp disagrees with the first layer's channel count.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies saved Adam state into optimizers built over the loaded network's parameters.
void restore_optimizers(const LoadedCheckpoint& ckpt, nn::Adam<float>& gen_opt, nn::Adam<float>& disc_opt);

}  // namespace tryon
