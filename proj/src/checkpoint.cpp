#include "tryon/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tryon/error.hpp"

namespace tryon {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "archive blobs are written in host order");

namespace {

constexpr char kMagic[8] = {'T', 'R', 'Y', 'O', 'N', 'C', 'K', 'P'};

template <class V>
void write_pod(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V read_pod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

const std::vector<float>& TensorArchive::f32(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end() || !std::holds_alternative<std::vector<float>>(it->second))
    throw InputError("archive has no float32 tensor '" + name + "'");
  return std::get<std::vector<float>>(it->second);
}

const std::vector<double>& TensorArchive::f64(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end() || !std::holds_alternative<std::vector<double>>(it->second))
    throw InputError("archive has no float64 tensor '" + name + "'");
  return std::get<std::vector<double>>(it->second);
}

void TensorArchive::save(const fs::path& path) const {
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, blob] : blobs_) {
    const bool f32 = std::holds_alternative<std::vector<float>>(blob);
    const std::uint64_t count = f32 ? std::get<0>(blob).size() : std::get<1>(blob).size();
    index.push_back({{"name", name}, {"dtype", f32 ? "f32" : "f64"}, {"count", count}, {"offset", offset}});
    offset += count * (f32 ? 4 : 8);
  }
  json header = {{"meta", meta}, {"tensors", index}};
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kArchiveVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, blob] : blobs_)
      std::visit(
          [&](const auto& v) {
            out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof v[0]));
          },
          blob);
    if (!out) throw InputError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

TensorArchive TensorArchive::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open archive " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError(path.string() + " is not a tryon archive");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kArchiveVersion) throw InputError("unsupported archive version " + std::to_string(version));
  const auto header_len = read_pod<std::uint64_t>(in);
  if (!in || header_len > (1u << 30)) throw InputError("corrupt archive header in " + path.string());
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  TensorArchive a;
  try {
    const json header = json::parse(text);
    a.meta = header.at("meta");
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto count = t.at("count").get<std::uint64_t>();
      if (t.at("dtype") == "f32") {
        std::vector<float> v(count);
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 4));
        a.blobs_[name] = std::move(v);
      } else {
        std::vector<double> v(count);
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 8));
        a.blobs_[name] = std::move(v);
      }
      if (!in) throw InputError("truncated archive " + path.string());
    }
  } catch (const json::exception& e) {
    throw InputError("corrupt archive header in " + path.string() + ": " + e.what());
  }
  return a;
}

// ---------------------------------------------------------------------------

namespace {

void put_optimizer(TensorArchive& a, const std::string& prefix, nn::Adam<float>& opt) {
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    a.put(prefix + ".m." + std::to_string(i), opt.first_moments()[i]);
    a.put(prefix + ".v." + std::to_string(i), opt.second_moments()[i]);
  }
  a.meta[prefix + "_steps"] = opt.steps();
}

void get_optimizer(const TensorArchive& a, const std::string& prefix, nn::Adam<float>& opt) {
  if (!a.meta.contains(prefix + "_steps")) throw ConfigError("checkpoint carries no " + prefix + " optimizer state");
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    const auto& m = a.f64(prefix + ".m." + std::to_string(i));
    const auto& v = a.f64(prefix + ".v." + std::to_string(i));
    if (m.size() != opt.first_moments()[i].size()) throw ConfigError("optimizer state does not match network");
    opt.first_moments()[i] = m;
    opt.second_moments()[i] = v;
  }
  opt.set_steps(a.meta.at(prefix + "_steps").get<long long>());
}

}  // namespace

void save_checkpoint(const fs::path& path, GsNetwork& net, const TrainingStamp& stamp, nn::Adam<float>* gen_opt,
                     nn::Adam<float>* disc_opt) {
  TensorArchive a;
  a.meta = {{"format", "tryon-gs"},
            {"config", net.config().to_json()},
            {"mode", std::string(to_string(net.mode()))},
            {"step", stamp.step},
            {"epoch", stamp.epoch},
            {"manifest_hash", stamp.manifest_hash},
            {"final", stamp.final},
            {"state", stamp.state}};
  for (auto& [name, p] : net.generator().parameters("gen")) a.put(name, p->value);
  for (auto& [name, p] : net.discriminator().parameters("disc")) a.put(name, p->value);
  if (gen_opt) put_optimizer(a, "opt_gen", *gen_opt);
  if (disc_opt) put_optimizer(a, "opt_disc", *disc_opt);
  a.save(path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  LoadedCheckpoint out;
  out.archive = TensorArchive::load(path);
  const json& meta = out.archive.meta;
  if (meta.value("format", "") != "tryon-gs") throw InputError(path.string() + " is not a garment-synthesis checkpoint");
  const GsConfig cfg = GsConfig::from_json(meta.at("config"));
  if (meta.at("mode").get<std::string>() != to_string(cfg.mode)) throw ConfigError("checkpoint mode stamp disagrees with its config");
  out.network = std::make_unique<GsNetwork>(cfg);
  auto load_params = [&](nn::NamedParams<float> params) {
    for (auto& [name, p] : params) {
      const auto& v = out.archive.f32(name);
      if (v.size() != p->value.size()) throw ConfigError("checkpoint tensor " + name + " has the wrong size");
      p->value = v;
    }
  };
  try {
    load_params(out.network->generator().parameters("gen"));
    load_params(out.network->discriminator().parameters("disc"));
  } catch (const InputError& e) {
    throw ConfigError(std::string("checkpoint does not match its architecture: ") + e.what());
  }
  if (out.network->generator().first_conv().in_channels() != channels_for(cfg.mode))
    throw ConfigError("checkpoint first layer does not match its mode stamp");
  out.stamp.step = meta.value("step", 0LL);
  out.stamp.epoch = meta.value("epoch", 0);
  out.stamp.manifest_hash = meta.value("manifest_hash", "");
  out.stamp.final = meta.value("final", false);
  out.stamp.state = meta.value("state", json::object());
  return out;
}

void restore_optimizers(const LoadedCheckpoint& ckpt, nn::Adam<float>& gen_opt, nn::Adam<float>& disc_opt) {
  get_optimizer(ckpt.archive, "opt_gen", gen_opt);
  get_optimizer(ckpt.archive, "opt_disc", disc_opt);
}

}  // namespace tryon
