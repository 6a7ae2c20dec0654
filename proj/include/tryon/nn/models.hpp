#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "tryon/nn/layers.hpp"

namespace tryon::nn {

/// Layer sizes shared by the generator and the multi-scale discriminator.
struct Architecture {
  int input_channels = 6;
  int ngf = 64;
  int n_down = 4;
  int n_blocks = 9;
  int ndf = 64;
  int d_layers = 3;
  int num_d = 2;

  /// Channels the discriminator sees: condition plus garment and mask.
  int discriminator_channels() const { return input_channels + 4; }
  bool operator==(const Architecture&) const = default;
};

/// Coarse-to-fine generator: 7x7 stem, strided downsampling, residual blocks, transposed
/// convolutions back up, 7x7 output to 4 channels through the garment/mask head.
template <class T>
class Generator : public Module<T> {
 public:
  Generator(const Architecture& a, std::mt19937_64& rng) {
    net_.template add<ReflectionPad2d<T>>(3);
    net_.template add<Conv2d<T>>(a.input_channels, a.ngf, 7, 1, 0, rng);
    net_.template add<InstanceNorm<T>>();
    net_.template add<LeakyReLU<T>>(T(0));
    int ch = a.ngf;
    for (int i = 0; i < a.n_down; ++i) {
      net_.template add<Conv2d<T>>(ch, ch * 2, 3, 2, 1, rng);
      net_.template add<InstanceNorm<T>>();
      net_.template add<LeakyReLU<T>>(T(0));
      ch *= 2;
    }
    for (int i = 0; i < a.n_blocks; ++i) net_.template add<ResidualBlock<T>>(ch, rng);
    for (int i = 0; i < a.n_down; ++i) {
      net_.template add<ConvTranspose2d<T>>(ch, ch / 2, 3, 2, 1, 1, rng);
      net_.template add<InstanceNorm<T>>();
      net_.template add<LeakyReLU<T>>(T(0));
      ch /= 2;
    }
    net_.template add<ReflectionPad2d<T>>(3);
    net_.template add<Conv2d<T>>(ch, 4, 7, 1, 0, rng);
    net_.template add<GarmentMaskHead<T>>();
    divisor_ = 1 << a.n_down;
    in_ = a.input_channels;
  }

  int input_channels() const { return in_; }
  /// Spatial sides must be multiples of this.
  int size_divisor() const { return divisor_; }
  Conv2d<T>& first_conv() { return static_cast<Conv2d<T>&>(net_[1]); }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.h % divisor_ != 0 || x.w % divisor_ != 0)
      throw std::invalid_argument("generator input " + x.shape_string() + " not divisible by " + std::to_string(divisor_));
    return net_.forward(x);
  }
  Tensor<T> backward(const Tensor<T>& g) override { return net_.backward(g); }
  void collect(const std::string& prefix, NamedParams<T>& out) override { net_.collect(prefix, out); }

 private:
  Sequential<T> net_;
  int divisor_ = 1;
  int in_ = 0;
};

/// Per-scale, per-layer feature maps; the last layer of each scale is the patch logits.
template <class T>
using FeatureSet = std::vector<std::vector<Tensor<T>>>;

/// Patch discriminator whose block outputs are exposed as features.
template <class T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(int in, int ndf, int n_layers, std::mt19937_64& rng) {
    auto block = [&](int cin, int cout, int stride, bool norm, bool act) {
      auto s = std::make_unique<Sequential<T>>();
      s->template add<Conv2d<T>>(cin, cout, 4, stride, 2, rng);
      if (norm) s->template add<InstanceNorm<T>>();
      if (act) s->template add<LeakyReLU<T>>(T(0.2));
      blocks_.push_back(std::move(s));
    };
    int nf = ndf;
    block(in, nf, 2, false, true);
    for (int n = 1; n < n_layers; ++n) {
      const int prev = nf;
      nf = std::min(nf * 2, 512);
      block(prev, nf, 2, true, true);
    }
    const int prev = nf;
    nf = std::min(nf * 2, 512);
    block(prev, nf, 1, true, true);
    block(nf, 1, 1, false, false);
  }

  std::vector<Tensor<T>> forward(const Tensor<T>& x) {
    std::vector<Tensor<T>> feats;
    Tensor<T> y = x;
    for (auto& b : blocks_) {
      y = b->forward(y);
      feats.push_back(y);
    }
    return feats;
  }

  /// Gradients may be injected at any layer; empty tensors mean zero.
  Tensor<T> backward(const std::vector<Tensor<T>>& grads) {
    Tensor<T> d;
    for (std::size_t l = blocks_.size(); l-- > 0;) {
      if (!grads[l].data.empty()) {
        if (d.data.empty()) {
          d = grads[l];
        } else {
          for (std::size_t k = 0; k < d.size(); ++k) d.data[k] += grads[l].data[k];
        }
      }
      if (d.data.empty()) continue;
      d = blocks_[l]->backward(d);
    }
    return d;
  }

  std::size_t layers() const { return blocks_.size(); }
  void collect(const std::string& prefix, NamedParams<T>& out) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i]->collect(join_name(prefix, std::to_string(i)), out);
  }

 private:
  std::vector<std::unique_ptr<Sequential<T>>> blocks_;
};

/// Discriminators at full and successively average-pooled resolutions.
template <class T>
class MultiScaleDiscriminator {
 public:
  MultiScaleDiscriminator(const Architecture& a, std::mt19937_64& rng) : in_(a.discriminator_channels()) {
    for (int s = 0; s < a.num_d; ++s) {
      scales_.emplace_back(in_, a.ndf, a.d_layers, rng);
      pools_.emplace_back(static_cast<std::size_t>(s));
    }
  }

  int input_channels() const { return in_; }
  std::size_t num_scales() const { return scales_.size(); }

  FeatureSet<T> forward(const Tensor<T>& x) {
    if (x.c != in_) throw std::invalid_argument("discriminator expects " + std::to_string(in_) + " channels, got " + x.shape_string());
    input_shape_ = x;
    input_shape_.data.clear();
    FeatureSet<T> out;
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      Tensor<T> xs = x;
      for (auto& p : pools_[s]) xs = p.forward(xs);
      out.push_back(scales_[s].forward(xs));
    }
    return out;
  }

  /// Gradient with respect to the input of the last forward().
  Tensor<T> backward(const FeatureSet<T>& grads) {
    Tensor<T> dx(input_shape_.n, input_shape_.c, input_shape_.h, input_shape_.w);
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      Tensor<T> d = scales_[s].backward(grads[s]);
      if (d.data.empty()) continue;
      for (auto it = pools_[s].rbegin(); it != pools_[s].rend(); ++it) d = it->backward(d);
      for (std::size_t k = 0; k < d.size(); ++k) dx.data[k] += d.data[k];
    }
    return dx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    for (std::size_t s = 0; s < scales_.size(); ++s) scales_[s].collect(join_name(prefix, "scale" + std::to_string(s)), out);
  }
  NamedParams<T> parameters(const std::string& prefix = "") {
    NamedParams<T> out;
    collect(prefix, out);
    return out;
  }
  void zero_grad() {
    for (auto& [n, p] : parameters()) p->zero_grad();
  }

 private:
  int in_;
  std::vector<PatchDiscriminator<T>> scales_;
  std::vector<std::vector<AvgPoolDown<T>>> pools_;
  Tensor<T> input_shape_;
};

// ---------------------------------------------------------------------------
// Perceptual feature extractors

/// Fixed feature backbone with per-layer loss weights. Implementations must treat batch
/// samples independently.
template <class T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> layer_weights() const = 0;
  virtual std::vector<Tensor<T>> extract(const Tensor<T>& x) = 0;
  /// Gradient with respect to the input of the last extract().
  virtual Tensor<T> backward(const std::vector<Tensor<T>>& grads) = 0;
};

/// Features are the pixels themselves.
template <class T>
class IdentityExtractor : public FeatureExtractor<T> {
 public:
  std::string name() const override { return "identity"; }
  std::vector<double> layer_weights() const override { return {1.0}; }
  std::vector<Tensor<T>> extract(const Tensor<T>& x) override { return {x}; }
  Tensor<T> backward(const std::vector<Tensor<T>>& grads) override { return grads[0]; }
};

template <class T>
class MaxPool2x : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
    h_ = x.h;
    w_ = x.w;
    argmax_.assign(y.size(), 0);
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox, ++o) {
            std::size_t best = 0;
            T bv = -std::numeric_limits<T>::infinity();
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t idx = static_cast<std::size_t>(2 * oy + dy) * x.w + (2 * ox + dx);
                const T v = x.channel(i, c)[idx];
                if (v > bv) {
                  bv = v;
                  best = idx;
                }
              }
            y.data[o] = bv;
            argmax_[o] = best;
          }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.n, g.c, h_, w_);
    std::size_t o = 0;
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < g.c; ++c)
        for (std::size_t k = 0; k < g.plane(); ++k, ++o) dx.channel(i, c)[argmax_[o]] += g.data[o];
    return dx;
  }

 private:
  int h_ = 0, w_ = 0;
  std::vector<std::size_t> argmax_;
};

/// VGG19 convolution trunk tapped after relu1_1, relu2_1, relu3_1, relu4_1 and relu5_1.
/// Weights come from a file (see load_vgg_weights); the trunk is frozen.
template <class T>
class VggExtractor : public FeatureExtractor<T> {
 public:
  /// Stage s: optional max-pool, then convolutions; the tap is the ReLU after the first conv.
  static constexpr int kStageConvs[5] = {2, 2, 4, 4, 4};
  static constexpr int kStageChannels[5] = {64, 128, 256, 512, 512};

  explicit VggExtractor(std::mt19937_64& rng, int width_divisor = 1) {
    int in = 3;
    // Slice s runs from just after tap s-1 to tap s.
    for (int s = 0; s < 5; ++s) {
      auto slice = std::make_unique<Sequential<T>>();
      if (s > 0) {
        // Remaining convs of the previous stage, then the pool.
        for (int k = 1; k < kStageConvs[s - 1]; ++k) {
          convs_.push_back(&slice->template add<Conv2d<T>>(in, in, 3, 1, 1, rng));
          slice->template add<LeakyReLU<T>>(T(0));
        }
        slice->template add<MaxPool2x<T>>();
      }
      const int out = kStageChannels[s] / width_divisor;
      convs_.push_back(&slice->template add<Conv2d<T>>(in, out, 3, 1, 1, rng));
      slice->template add<LeakyReLU<T>>(T(0));
      in = out;
      slices_.push_back(std::move(slice));
    }
  }

  std::string name() const override { return "vgg19"; }
  std::vector<double> layer_weights() const override { return {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0}; }

  /// Convolutions in network order; weights are loaded into these.
  std::vector<Conv2d<T>*>& convs() { return convs_; }

  std::vector<Tensor<T>> extract(const Tensor<T>& x) override {
    static constexpr double kMean[3] = {0.485, 0.456, 0.406};
    static constexpr double kStd[3] = {0.229, 0.224, 0.225};
    Tensor<T> y = x;
    for (int i = 0; i < y.n; ++i)
      for (int c = 0; c < 3; ++c)
        for (T* p = y.channel(i, c); p != y.channel(i, c) + y.plane(); ++p) *p = static_cast<T>((*p - kMean[c]) / kStd[c]);
    std::vector<Tensor<T>> taps;
    for (auto& s : slices_) {
      y = s->forward(y);
      taps.push_back(y);
    }
    return taps;
  }

  Tensor<T> backward(const std::vector<Tensor<T>>& grads) override {
    static constexpr double kStd[3] = {0.229, 0.224, 0.225};
    Tensor<T> d;
    for (std::size_t l = slices_.size(); l-- > 0;) {
      if (d.data.empty()) {
        d = grads[l];
      } else {
        for (std::size_t k = 0; k < d.size(); ++k) d.data[k] += grads[l].data[k];
      }
      d = slices_[l]->backward(d);
    }
    for (int i = 0; i < d.n; ++i)
      for (int c = 0; c < 3; ++c)
        for (T* p = d.channel(i, c); p != d.channel(i, c) + d.plane(); ++p) *p = static_cast<T>(*p / kStd[c]);
    return d;
  }

 private:
  std::vector<std::unique_ptr<Sequential<T>>> slices_;
  std::vector<Conv2d<T>*> convs_;
};

}  // namespace tryon::nn
