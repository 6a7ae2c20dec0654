#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tryon/error.hpp"
#include "tryon/nn/models.hpp"

namespace tryon::nn {

inline constexpr double kGanEps = 1e-7;

enum class GanMode { Log, LeastSquares };

/// L_GAN and the two optimizer objectives derived from it.
struct GanValues {
  double l_gan = 0;         // E[log D(x,y)] + E[log(1 - D(x,GS(x)))]
  double for_d = 0;         // minimized by D: -L_GAN
  double for_gs = 0;        // minimized by GS: E[log(1 - D(x,GS(x)))]
};

/// Probability-form scores in (0,1); values at 0 or 1 are clamped by kGanEps.
inline GanValues gan_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw InputError("gan_loss needs non-empty score sets");
  auto clamp = [](double p) { return std::clamp(p, kGanEps, 1.0 - kGanEps); };
  double real = 0, fake = 0;
  for (double p : d_real) real += std::log(clamp(p));
  for (double p : d_fake) fake += std::log(1.0 - clamp(p));
  real /= static_cast<double>(d_real.size());
  fake /= static_cast<double>(d_fake.size());
  return {real + fake, -(real + fake), fake};
}

/// Objective values plus gradients with respect to the patch logits of each scale.
template <class T>
struct GanTerms {
  GanValues values;
  std::vector<Tensor<T>> d_grad_real;   // d(for_d)/d logits_real
  std::vector<Tensor<T>> d_grad_fake;   // d(for_d)/d logits_fake
  std::vector<Tensor<T>> gs_grad_fake;  // d(for_gs)/d logits_fake
};

/// Scores are sigmoid(logit) in log mode and the raw logits in least-squares mode. Each scale
/// contributes the mean over its patches; scales are averaged.
template <class T>
GanTerms<T> gan_terms(const std::vector<Tensor<T>>& real_logits, const std::vector<Tensor<T>>& fake_logits,
                      GanMode mode) {
  if (real_logits.size() != fake_logits.size() || real_logits.empty())
    throw InputError("gan_terms: mismatched scale lists");
  GanTerms<T> out;
  const double ns = static_cast<double>(real_logits.size());
  for (std::size_t s = 0; s < real_logits.size(); ++s) {
    const auto& r = real_logits[s];
    const auto& f = fake_logits[s];
    Tensor<T> gr = zeros_like(r), gf = zeros_like(f), gg = zeros_like(f);
    const double nr = static_cast<double>(r.size()), nf = static_cast<double>(f.size());
    double real = 0, fake = 0, lsd = 0, lsg = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double z = r.data[k];
      if (mode == GanMode::Log) {
        const double p = sigmoid(z);
        const bool clamped = p < kGanEps || p > 1.0 - kGanEps;
        real += std::log(std::clamp(p, kGanEps, 1.0 - kGanEps));
        // d/dz -log(sigmoid z) = -(1 - p)
        gr.data[k] = static_cast<T>(clamped ? 0.0 : -(1.0 - p) / nr / ns);
      } else {
        lsd += 0.5 * (z - 1) * (z - 1) / nr;
        gr.data[k] = static_cast<T>((z - 1) / nr / ns);
      }
    }
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double z = f.data[k];
      if (mode == GanMode::Log) {
        const double p = sigmoid(z);
        const bool clamped = p < kGanEps || p > 1.0 - kGanEps;
        fake += std::log(1.0 - std::clamp(p, kGanEps, 1.0 - kGanEps));
        // d/dz log(1 - sigmoid z) = -p
        gf.data[k] = static_cast<T>(clamped ? 0.0 : p / nf / ns);
        gg.data[k] = static_cast<T>(clamped ? 0.0 : -p / nf / ns);
      } else {
        lsd += 0.5 * z * z / nf;
        lsg += (z - 1) * (z - 1) / nf;
        gf.data[k] = static_cast<T>(z / nf / ns);
        gg.data[k] = static_cast<T>(2 * (z - 1) / nf / ns);
      }
    }
    if (mode == GanMode::Log) {
      real /= nr;
      fake /= nf;
      out.values.l_gan += (real + fake) / ns;
      out.values.for_d += -(real + fake) / ns;
      out.values.for_gs += fake / ns;
    } else {
      out.values.for_d += lsd / ns;
      out.values.for_gs += lsg / ns;
      out.values.l_gan += -lsd / ns;
    }
    out.d_grad_real.push_back(std::move(gr));
    out.d_grad_fake.push_back(std::move(gf));
    out.gs_grad_fake.push_back(std::move(gg));
  }
  return out;
}

/// Patch logits of each scale (the last feature of each scale).
template <class T>
std::vector<Tensor<T>> logits_of(const FeatureSet<T>& f) {
  std::vector<Tensor<T>> out;
  for (const auto& scale : f) out.push_back(scale.back());
  return out;
}

template <class T>
struct FmTerms {
  double value = 0;
  FeatureSet<T> grad_fake;  // same layout as the inputs; final-layer entries are empty
};

/// Mean |fake - real| per intermediate layer, averaged over layers and scales. The final
/// logits layer of each scale is excluded when `skip_logits` is set.
template <class T>
FmTerms<T> feature_matching(const FeatureSet<T>& real, const FeatureSet<T>& fake, bool skip_logits = true) {
  if (real.size() != fake.size()) throw InputError("feature matching: scale count differs");
  FmTerms<T> out;
  std::size_t terms = 0;
  for (std::size_t s = 0; s < real.size(); ++s) {
    if (real[s].size() != fake[s].size()) throw InputError("feature matching: layer count differs");
    const std::size_t used = skip_logits ? real[s].size() - 1 : real[s].size();
    for (std::size_t l = 0; l < used; ++l)
      if (!real[s][l].same_shape(fake[s][l])) throw InputError("feature matching: layer shape differs");
    terms += used;
  }
  if (terms == 0) throw InputError("feature matching: no layers");
  for (std::size_t s = 0; s < real.size(); ++s) {
    out.grad_fake.emplace_back(fake[s].size());
    const std::size_t used = skip_logits ? real[s].size() - 1 : real[s].size();
    for (std::size_t l = 0; l < used; ++l) {
      const auto& r = real[s][l];
      const auto& f = fake[s][l];
      Tensor<T> g = zeros_like(f);
      const double scale = 1.0 / static_cast<double>(f.size()) / static_cast<double>(terms);
      double sum = 0;
      for (std::size_t k = 0; k < f.size(); ++k) {
        const double d = static_cast<double>(f.data[k]) - r.data[k];
        sum += std::abs(d);
        g.data[k] = static_cast<T>(d > 0 ? scale : (d < 0 ? -scale : 0.0));
      }
      out.value += sum * scale;
      out.grad_fake[s][l] = std::move(g);
    }
  }
  return out;
}

template <class T>
struct PerceptualTerms {
  double value = 0;
  Tensor<T> grad_garment;  // [N,3,H,W]
  Tensor<T> grad_mask;     // [N,1,H,W]
};

/// sum_l w_l * mean |phi_l(garment * mask) - phi_l(target)|. The target is used as given.
template <class T>
PerceptualTerms<T> perceptual_loss(const Tensor<T>& garment, const Tensor<T>& mask, const Tensor<T>& target,
                                   FeatureExtractor<T>& extractor) {
  if (garment.c != 3 || mask.c != 1 || !garment.same_shape(target) || mask.n != garment.n || mask.h != garment.h ||
      mask.w != garment.w)
    throw InputError("perceptual loss: shape mismatch " + garment.shape_string() + " " + mask.shape_string() + " " +
                     target.shape_string());
  Tensor<T> pred = garment;
  for (int i = 0; i < pred.n; ++i)
    for (int c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < pred.plane(); ++k) pred.channel(i, c)[k] *= mask.channel(i, 0)[k];

  const int n = garment.n;
  const auto feats = extractor.extract(concat_batch(pred, target));
  const auto weights = extractor.layer_weights();
  if (weights.size() != feats.size()) throw ConfigError("perceptual extractor weight count differs from layers");
  PerceptualTerms<T> out;
  std::vector<Tensor<T>> grads;
  for (std::size_t l = 0; l < feats.size(); ++l) {
    const auto& f = feats[l];
    Tensor<T> g = zeros_like(f);
    const std::size_t half = static_cast<std::size_t>(n) * f.sample_size();
    const double scale = weights[l] / static_cast<double>(half);
    double sum = 0;
    for (std::size_t k = 0; k < half; ++k) {
      const double d = static_cast<double>(f.data[k]) - f.data[half + k];
      sum += std::abs(d);
      g.data[k] = static_cast<T>(d > 0 ? scale : (d < 0 ? -scale : 0.0));
    }
    out.value += sum * scale;
    grads.push_back(std::move(g));
  }
  const Tensor<T> dpred = slice_batch(extractor.backward(grads), 0, n);
  out.grad_garment = zeros_like(garment);
  out.grad_mask = zeros_like(mask);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < dpred.plane(); ++k) {
        const T d = dpred.channel(i, c)[k];
        out.grad_garment.channel(i, c)[k] = d * mask.channel(i, 0)[k];
        out.grad_mask.channel(i, 0)[k] += d * garment.channel(i, c)[k];
      }
  return out;
}

/// Per-term values of one generator update.
struct LossBreakdown {
  double gan = 0;  // adversarial generator term
  double fm = 0;
  double vgg = 0;
  double lambda0 = 1;
  double lambda1 = 1;
  double total = 0;
  double discriminator = 0;  // -L_GAN
};

struct Objectives {
  double generator = 0;
  double discriminator = 0;
};

inline Objectives total_objective(const LossBreakdown& parts) {
  if (parts.lambda0 < 0 || parts.lambda1 < 0) throw ConfigError("loss weights must be non-negative");
  return {parts.gan + parts.lambda0 * parts.fm + parts.lambda1 * parts.vgg, parts.discriminator};
}

}  // namespace tryon::nn
