#include "tryon/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tryon/error.hpp"
#include "tryon/log.hpp"
#include "tryon/metrics.hpp"
#include "tryon/png_io.hpp"

namespace tryon {
namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the combined words.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct RecordImages {
  Image vm, sdp, dp, garment;
  SoftMask mask;
};

bool needs_dp(RepresentationMode m) { return m == RepresentationMode::VMDP; }

RecordImages load_record_images(const DatasetRecord& r, const fs::path& root, RepresentationMode mode, int side) {
  RecordImages im;
  auto read = [&](const std::string& rel, const char* what) {
    if (rel.empty()) throw InputError(std::string("record ") + std::to_string(r.frame_id) + " has no " + what + " image");
    return read_png(root / rel);
  };
  im.vm = read(r.vm_path, "vm");
  im.sdp = read(r.sdp_path, "sdp");
  if (needs_dp(mode)) im.dp = read(r.dp_path, "dp");
  im.garment = read(r.garment_path, "garment");
  im.mask = SoftMask::from_image(read(r.mask_path, "mask")).binarized();
  if (side > 0 && (im.vm.height() != side || im.vm.width() != side)) {
    im.vm = resize(im.vm, side, side, Interpolation::Bilinear);
    im.sdp = resize(im.sdp, side, side, Interpolation::Nearest);
    if (!im.dp.empty()) im.dp = resize(im.dp, side, side, Interpolation::Nearest);
    im.mask = SoftMask::from_image(resize(im.mask.to_image(), side, side, Interpolation::Nearest));
    im.garment = apply_mask(resize(im.garment, side, side, Interpolation::Bilinear), im.mask);
  }
  return im;
}

TrainingPair pair_from_images(RecordImages im, RepresentationMode mode, std::optional<std::uint64_t> jitter_seed,
                              const AffineJitterRanges& ranges) {
  if (jitter_seed) {
    const auto params = draw_affine_params(ranges, *jitter_seed, im.vm.width(), im.vm.height());
    const Affine2x3 m = affine_matrix(params, im.vm.width(), im.vm.height());
    im.vm = warp_affine(im.vm, m, Interpolation::Bilinear);
    im.sdp = warp_affine(im.sdp, m, Interpolation::Nearest);
    if (!im.dp.empty()) im.dp = warp_affine(im.dp, m, Interpolation::Nearest);
    im.mask = SoftMask::from_image(warp_affine(im.mask.to_image(), m, Interpolation::Nearest));
    im.garment = apply_mask(warp_affine(im.garment, m, Interpolation::Bilinear), im.mask);
  }
  TrainingPair p;
  switch (mode) {
    case RepresentationMode::Hybrid: p.x = concat_channels(im.vm, im.sdp); break;
    case RepresentationMode::VM: p.x = im.vm; break;
    case RepresentationMode::VMDP: p.x = concat_channels(im.vm, im.dp); break;
    case RepresentationMode::SDP: p.x = im.sdp; break;
  }
  p.y = concat_channels(im.garment, im.mask.to_image());
  return p;
}

bool finite(const nn::LossBreakdown& l) {
  return std::isfinite(l.gan) && std::isfinite(l.fm) && std::isfinite(l.vgg) && std::isfinite(l.total) &&
         std::isfinite(l.discriminator);
}

// Embeds a fake-half gradient into a [2B,...] tensor whose real half is zero.
Tensor<float> fake_half(const Tensor<float>& g) { return nn::concat_batch(g, zeros_like(g)); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || roi_side <= 0) throw ConfigError("epochs, batch size and roi side must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (lambda0 < 0 || lambda1 < 0) throw ConfigError("loss weights must be non-negative");
  if (arch != "production" && arch != "tiny") throw ConfigError("unknown architecture preset '" + arch + "'");
  if (perceptual == "none" && lambda1 > 0) throw ConfigError("perceptual weight > 0 but no perceptual backbone configured");
  if (!(decay_start >= 0 && decay_start <= 1)) throw ConfigError("decay_start must lie in [0,1]");
  if (!(holdout_fraction >= 0 && holdout_fraction < 1)) throw ConfigError("holdout fraction must lie in [0,1)");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"lambda0", lambda0},
          {"lambda1", lambda1},
          {"roi_side", roi_side},
          {"mode", std::string(to_string(mode))},
          {"seed", seed},
          {"arch", arch},
          {"gan", gan == nn::GanMode::Log ? "log" : "lsgan"},
          {"perceptual", perceptual},
          {"augment", augment},
          {"jitter", {{"translate_frac", jitter.translate_frac}, {"rotate_deg", jitter.rotate_deg}, {"scale_frac", jitter.scale_frac}}},
          {"max_steps", max_steps},
          {"decay_start", decay_start},
          {"holdout_fraction", holdout_fraction},
          {"eval_each_epoch", eval_each_epoch}};
}

TrainConfig TrainConfig::from_json(const json& j, const TrainConfig& base) {
  TrainConfig c = base;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.lambda0 = j.value("lambda0", c.lambda0);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.roi_side = j.value("roi_side", c.roi_side);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.arch = j.value("arch", c.arch);
    if (j.contains("gan")) {
      const auto g = j.at("gan").get<std::string>();
      if (g != "log" && g != "lsgan") throw ConfigError("unknown GAN mode '" + g + "'");
      c.gan = g == "log" ? nn::GanMode::Log : nn::GanMode::LeastSquares;
    }
    c.perceptual = j.value("perceptual", c.perceptual);
    c.augment = j.value("augment", c.augment);
    if (j.contains("jitter")) {
      const auto& jj = j.at("jitter");
      c.jitter.translate_frac = jj.value("translate_frac", c.jitter.translate_frac);
      c.jitter.rotate_deg = jj.value("rotate_deg", c.jitter.rotate_deg);
      c.jitter.scale_frac = jj.value("scale_frac", c.jitter.scale_frac);
    }
    c.max_steps = j.value("max_steps", c.max_steps);
    c.decay_start = j.value("decay_start", c.decay_start);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.eval_each_epoch = j.value("eval_each_epoch", c.eval_each_epoch);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------

TrainingPair make_training_pair(const DatasetRecord& record, const fs::path& root, RepresentationMode mode,
                                std::optional<std::uint64_t> jitter_seed, const AffineJitterRanges& ranges,
                                int roi_side) {
  return pair_from_images(load_record_images(record, root, mode, roi_side), mode, jitter_seed, ranges);
}

HoldoutSplit split_holdout(const std::vector<DatasetRecord>& records, double fraction) {
  std::vector<DatasetRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
  std::size_t n_hold = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sorted.size()) - 1e-9));
  if (fraction > 0 && sorted.size() >= 2) n_hold = std::max<std::size_t>(n_hold, 1);
  n_hold = std::min(n_hold, sorted.size() > 0 ? sorted.size() - 1 : 0);
  HoldoutSplit s;
  s.train.assign(sorted.begin(), sorted.end() - static_cast<std::ptrdiff_t>(n_hold));
  s.holdout.assign(sorted.end() - static_cast<std::ptrdiff_t>(n_hold), sorted.end());
  return s;
}

json EvalSummary::to_json() const { return {{"count", count}, {"masked_l1", masked_l1}, {"ssim", ssim}}; }

EvalSummary evaluate_holdout(const GarmentPredictor& predict, const std::vector<DatasetRecord>& holdout,
                             const fs::path& root, RepresentationMode mode, int roi_side) {
  if (holdout.empty()) throw ConfigError("holdout split is empty");
  EvalSummary s;
  for (const auto& r : holdout) {
    const TrainingPair p = make_training_pair(r, root, mode, std::nullopt, {}, roi_side);
    const GsOutput out = predict(p.x);
    const Image pred = apply_mask(out.garment, out.mask);
    const Image truth = slice_channels(p.y, 0, 3);
    const SoftMask mask = SoftMask::from_image(slice_channels(p.y, 3, 1));
    s.masked_l1 += masked_l1(pred, truth, mask);
    s.ssim += ssim(pred, truth);
    ++s.count;
  }
  s.masked_l1 /= static_cast<double>(s.count);
  s.ssim /= static_cast<double>(s.count);
  return s;
}

// ---------------------------------------------------------------------------
// Trainer

struct Trainer::Cache {
  bool enabled = false;
  std::vector<std::optional<RecordImages>> images;
};

Trainer::Trainer(DatasetManifest manifest, fs::path dataset_root, TrainConfig config, fs::path out_dir)
    : Trainer(std::move(manifest), std::move(dataset_root), std::move(config), std::move(out_dir), nullptr) {}

Trainer::Trainer(DatasetManifest manifest, fs::path dataset_root, TrainConfig config, fs::path out_dir,
                 std::unique_ptr<GsNetwork> net)
    : manifest_(std::move(manifest)),
      root_(std::move(dataset_root)),
      config_(std::move(config)),
      out_(std::move(out_dir)),
      net_(std::move(net)) {
  init();
}

Trainer::~Trainer() = default;

void Trainer::init() {
  config_.validate();
  if (manifest_.records.empty()) throw EmptyDatasetError("cannot train on an empty dataset");
  if (!net_) {
    GsConfig g = config_.arch == "tiny" ? GsConfig::tiny(config_.mode) : GsConfig::production(config_.mode);
    g.gan = config_.gan;
    g.init_seed = config_.seed;
    net_ = std::make_unique<GsNetwork>(g);
  }
  if (net_->mode() != config_.mode) throw ConfigError("checkpoint mode differs from the training mode");
  if (config_.roi_side % (1 << net_->config().arch.n_down) != 0)
    throw ConfigError("roi side " + std::to_string(config_.roi_side) + " is not a multiple of " +
                      std::to_string(1 << net_->config().arch.n_down));

  nn::AdamConfig ac{config_.learning_rate, config_.adam_beta1, config_.adam_beta2, 1e-8};
  gen_opt_ = std::make_unique<nn::Adam<float>>(net_->generator().parameters("gen"), ac);
  disc_opt_ = std::make_unique<nn::Adam<float>>(net_->discriminator().parameters("disc"), ac);

  if (config_.lambda1 > 0) {
    if (config_.perceptual == "identity")
      extractor_ = std::make_unique<nn::IdentityExtractor<float>>();
    else
      extractor_ = load_vgg_extractor(config_.perceptual);
  }

  split_ = split_holdout(manifest_.records, config_.holdout_fraction);
  if (split_.train.empty()) throw EmptyDatasetError("no training records after the holdout split");
  steps_per_epoch_ = (static_cast<long long>(split_.train.size()) + config_.batch_size - 1) / config_.batch_size;
  total_steps_ = config_.max_steps > 0 ? config_.max_steps : config_.epochs * steps_per_epoch_;

  cache_ = std::make_unique<Cache>();
  const double bytes = static_cast<double>(split_.train.size()) * config_.roi_side * config_.roi_side * 13 * 4;
  cache_->enabled = bytes < 1.5e9;
  cache_->images.resize(split_.train.size());

  if (!out_.empty()) {
    fs::create_directories(out_ / "checkpoints");
    log_.open(out_ / "run.jsonl", std::ios::app);
    if (!log_) throw InputError("cannot write run log in " + out_.string());
  }
}

std::unique_ptr<Trainer> Trainer::resume(const fs::path& checkpoint, DatasetManifest manifest, fs::path dataset_root,
                                         fs::path out_dir) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  if (!ck.stamp.state.contains("train_config")) throw ConfigError("checkpoint carries no training config");
  if (!manifest.content_hash.empty() && ck.stamp.manifest_hash != manifest.content_hash)
    throw ConfigError("checkpoint was trained on a different dataset (manifest hash differs)");
  const TrainConfig cfg = TrainConfig::from_json(ck.stamp.state.at("train_config"));
  std::unique_ptr<Trainer> t(new Trainer(std::move(manifest), std::move(dataset_root), cfg, std::move(out_dir),
                                         std::move(ck.network)));
  restore_optimizers(ck, *t->gen_opt_, *t->disc_opt_);
  t->step_ = ck.stamp.step;
  t->ema_ = ck.stamp.state.value("ema", json::object());
  return t;
}

double Trainer::learning_rate_at(long long step) const {
  const long long decay_from = static_cast<long long>(std::floor(config_.decay_start * static_cast<double>(total_steps_)));
  if (step < decay_from || total_steps_ == decay_from) return config_.learning_rate;
  return config_.learning_rate * static_cast<double>(total_steps_ - step) / static_cast<double>(total_steps_ - decay_from);
}

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(split_.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(config_.seed, static_cast<std::uint64_t>(epoch) + 1));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

TrainingPair Trainer::load_pair(std::size_t i, std::optional<std::uint64_t> jitter_seed) {
  const auto& rec = split_.train[i];
  if (cache_->enabled) {
    auto& slot = cache_->images[i];
    if (!slot) slot = load_record_images(rec, root_, config_.mode, config_.roi_side);
    return pair_from_images(*slot, config_.mode, jitter_seed, config_.jitter);
  }
  return make_training_pair(rec, root_, config_.mode, jitter_seed, config_.jitter, config_.roi_side);
}

StepResult Trainer::step() {
  if (done()) throw ConfigError("training already finished");
  const int ep = epoch();
  const long long within = step_ % steps_per_epoch_;
  const auto order = epoch_order(ep);
  const std::size_t first = static_cast<std::size_t>(within) * config_.batch_size;
  const std::size_t last = std::min(order.size(), first + config_.batch_size);

  std::vector<TrainingPair> pairs;
  for (std::size_t k = first; k < last; ++k) {
    std::optional<std::uint64_t> js;
    if (config_.augment) js = mix(mix(config_.seed, static_cast<std::uint64_t>(step_)), k - first);
    pairs.push_back(load_pair(order[k], js));
  }
  std::vector<const Image*> xs, ys;
  for (const auto& p : pairs) {
    xs.push_back(&p.x);
    ys.push_back(&p.y);
  }
  Tensor<float> x = to_tensor(xs);
  const Tensor<float> y = to_tensor(ys);
  const int b = x.n;
  to_signed_range(x);

  auto& gen = net_->generator();
  auto& disc = net_->discriminator();
  const double lr = learning_rate_at(step_);
  gen_opt_->set_lr(lr);
  disc_opt_->set_lr(lr);

  // Generator pass; the discriminator scores fake and real pairs in one stacked batch.
  const Tensor<float> out = gen.forward(x);
  Tensor<float> fake_y = out, real_y = y;
  to_signed_range(fake_y);
  to_signed_range(real_y);
  const Tensor<float> d_in = nn::concat_batch(nn::concat_channels(x, fake_y), nn::concat_channels(x, real_y));
  const nn::FeatureSet<float> feats = disc.forward(d_in);
  nn::FeatureSet<float> fake_f, real_f;
  for (const auto& scale : feats) {
    fake_f.emplace_back();
    real_f.emplace_back();
    for (const auto& f : scale) {
      fake_f.back().push_back(nn::slice_batch(f, 0, b));
      real_f.back().push_back(nn::slice_batch(f, b, b));
    }
  }
  const auto gan = nn::gan_terms(nn::logits_of(real_f), nn::logits_of(fake_f), config_.gan);
  const auto fm = nn::feature_matching(real_f, fake_f);

  nn::LossBreakdown losses;
  losses.lambda0 = config_.lambda0;
  losses.lambda1 = config_.lambda1;
  losses.gan = gan.values.for_gs;
  losses.fm = fm.value;
  losses.discriminator = gan.values.for_d;

  Tensor<float> grad_out = zeros_like(out);
  if (extractor_) {
    const Tensor<float> garment = nn::slice_channels(out, 0, 3);
    const Tensor<float> mask = nn::slice_channels(out, 3, 1);
    const auto perc = nn::perceptual_loss(garment, mask, nn::slice_channels(y, 0, 3), *extractor_);
    losses.vgg = perc.value;
    const auto lam = static_cast<float>(config_.lambda1);
    for (int i = 0; i < b; ++i) {
      for (int c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < out.plane(); ++k) grad_out.channel(i, c)[k] += lam * perc.grad_garment.channel(i, c)[k];
      for (std::size_t k = 0; k < out.plane(); ++k) grad_out.channel(i, 3)[k] += lam * perc.grad_mask.channel(i, 0)[k];
    }
  }
  losses.total = nn::total_objective(losses).generator;

  StepResult result{step_, ep, lr, losses};
  if (!finite(losses)) diverged(result);

  // Generator gradient through the discriminator: adversarial term on the logits plus
  // weighted feature matching on the intermediate layers, fake half only.
  nn::FeatureSet<float> g_grads(feats.size());
  for (std::size_t s = 0; s < feats.size(); ++s) {
    const std::size_t layers = feats[s].size();
    g_grads[s].resize(layers);
    for (std::size_t l = 0; l + 1 < layers; ++l) {
      Tensor<float> g = fm.grad_fake[s][l];
      for (auto& v : g.data) v *= static_cast<float>(config_.lambda0);
      g_grads[s][l] = fake_half(g);
    }
    g_grads[s][layers - 1] = fake_half(gan.gs_grad_fake[s]);
  }
  const Tensor<float> d_input_grad = disc.backward(g_grads);
  const int cx = x.c;
  for (int i = 0; i < b; ++i)
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < out.plane(); ++k)
        grad_out.channel(i, c)[k] += 2.0f * d_input_grad.channel(i, cx + c)[k];  // through 2v - 1

  gen_opt_->zero_grad();
  gen.backward(grad_out);

  // Discriminator gradient: -L_GAN on the logits of both halves.
  disc_opt_->zero_grad();
  nn::FeatureSet<float> d_grads(feats.size());
  for (std::size_t s = 0; s < feats.size(); ++s) {
    d_grads[s].resize(feats[s].size());
    d_grads[s].back() = nn::concat_batch(gan.d_grad_fake[s], gan.d_grad_real[s]);
  }
  disc.backward(d_grads);

  gen_opt_->step();
  disc_opt_->step();
  ++step_;

  auto ema = [&](const char* key, double v) {
    ema_[key] = ema_.contains(key) ? 0.99 * ema_[key].get<double>() + 0.01 * v : v;
  };
  ema("gan", losses.gan);
  ema("fm", losses.fm);
  ema("vgg", losses.vgg);
  ema("total", losses.total);
  ema("discriminator", losses.discriminator);

  log_line({{"event", "step"},
            {"step", result.step},
            {"epoch", ep},
            {"lr", lr},
            {"gan", losses.gan},
            {"fm", losses.fm},
            {"vgg", losses.vgg},
            {"total", losses.total},
            {"discriminator", losses.discriminator},
            {"lambda0", losses.lambda0},
            {"lambda1", losses.lambda1}});

  if (step_ % steps_per_epoch_ == 0 || done()) {
    const int finished = static_cast<int>((step_ - 1) / steps_per_epoch_);
    if (config_.eval_each_epoch && !split_.holdout.empty() && !out_.empty()) {
      json j = evaluate(split_.holdout).to_json();
      j["event"] = "eval";
      j["epoch"] = finished;
      j["step"] = step_;
      log_line(j);
    }
    if (!out_.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", finished + 1);
      save(out_ / "checkpoints" / name);
    }
  }
  return result;
}

fs::path Trainer::run() {
  while (!done()) step();
  if (out_.empty()) return {};
  const fs::path final_path = out_ / "final.ckpt";
  save(final_path, true);
  log_line({{"event", "final"}, {"step", step_}, {"checkpoint", final_path.string()}});
  return final_path;
}

EvalSummary Trainer::evaluate(const std::vector<DatasetRecord>& records) {
  return evaluate_holdout([this](const Image& x) { return net_->forward(x); }, records, root_, config_.mode,
                          config_.roi_side);
}

void Trainer::save(const fs::path& path, bool final) {
  TrainingStamp stamp;
  stamp.step = step_;
  stamp.epoch = epoch();
  stamp.manifest_hash = manifest_.content_hash;
  stamp.final = final;
  stamp.state = {{"train_config", config_.to_json()}, {"ema", ema_}};
  save_checkpoint(path, *net_, stamp, gen_opt_.get(), disc_opt_.get());
}

void Trainer::log_line(const json& j) {
  if (log_.is_open()) log_ << j.dump() << '\n' << std::flush;
}

void Trainer::diverged(const StepResult& r) {
  const json dump = {{"step", r.step},
                     {"epoch", r.epoch},
                     {"lr", r.lr},
                     {"gan", r.losses.gan},
                     {"fm", r.losses.fm},
                     {"vgg", r.losses.vgg},
                     {"discriminator", r.losses.discriminator},
                     {"ema", ema_}};
  if (!out_.empty()) {
    std::ofstream(out_ / "divergence.json") << dump.dump(2) << '\n';
    save(out_ / "divergence.ckpt");
  }
  throw DivergenceError("non-finite loss at step " + std::to_string(r.step) + ": " + dump.dump());
}

}  // namespace tryon
