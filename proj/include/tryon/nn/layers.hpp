#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tryon/nn/tensor.hpp"

namespace tryon::nn {

template <class T>
struct Param {
  std::vector<T> value;
  std::vector<T> grad;

  explicit Param(std::size_t n = 0) : value(n, T(0)), grad(n, T(0)) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
using NamedParams = std::vector<std::pair<std::string, Param<T>*>>;

/// A differentiable layer. backward() consumes the cache of the most recent forward() and
/// may be called more than once per forward; parameter gradients accumulate.
template <class T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect(const std::string&, NamedParams<T>&) {}

  NamedParams<T> parameters(const std::string& prefix = "") {
    NamedParams<T> out;
    collect(prefix, out);
    return out;
  }
  void zero_grad() {
    for (auto& [name, p] : parameters()) p->zero_grad();
  }
};

template <class T>
using ModulePtr = std::unique_ptr<Module<T>>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

// ---------------------------------------------------------------------------

/// Patch gather/scatter shared by convolution and transposed convolution. `h, w` is the
/// side carrying `channels`, `ho, wo` the strided side.
template <class T>
struct ConvGeometry {
  int channels, k, s, p;

  int out_size(int n) const { return (n + 2 * p - k) / s + 1; }

  void im2col(const T* x, int h, int w, int ho, int wo, T* cols) const {
    for (int c = 0; c < channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * ho * wo;
          const T* xc = x + static_cast<std::size_t>(c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - p + ky;
            T* r = row + static_cast<std::size_t>(oy) * wo;
            if (iy < 0 || iy >= h) {
              std::fill(r, r + wo, T(0));
              continue;
            }
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - p + kx;
              r[ox] = (ix < 0 || ix >= w) ? T(0) : xc[static_cast<std::size_t>(iy) * w + ix];
            }
          }
        }
  }

  void col2im(const T* cols, int h, int w, int ho, int wo, T* dx) const {
    for (int c = 0; c < channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * ho * wo;
          T* dc = dx + static_cast<std::size_t>(c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= h) continue;
            const T* r = row + static_cast<std::size_t>(oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - p + kx;
              if (ix >= 0 && ix < w) dc[static_cast<std::size_t>(iy) * w + ix] += r[ox];
            }
          }
        }
  }
};

template <class T>
class Conv2d : public Module<T> {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng, double init_std = 0.02)
      : in_(in), out_(out), geo_{in, kernel, stride, pad},
        weight_(static_cast<std::size_t>(out) * in * kernel * kernel), bias_(static_cast<std::size_t>(out)) {
    std::normal_distribution<double> normal(0.0, init_std);
    for (auto& v : weight_.value) v = static_cast<T>(normal(rng));
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c != in_) throw std::invalid_argument("conv expects " + std::to_string(in_) + " channels, got " + x.shape_string());
    x_ = x;
    const int ho = geo_.out_size(x.h), wo = geo_.out_size(x.w);
    Tensor<T> y(x.n, out_, ho, wo);
    const int K = in_ * geo_.k * geo_.k;
    const int P = ho * wo;
    std::vector<T> cols(static_cast<std::size_t>(K) * P);
    Eigen::Map<const Mat> W(weight_.value.data(), out_, K);
    for (int i = 0; i < x.n; ++i) {
      geo_.im2col(x.sample(i), x.h, x.w, ho, wo, cols.data());
      Eigen::Map<Mat> Y(y.sample(i), out_, P);
      Y.noalias() = W * Eigen::Map<const Mat>(cols.data(), K, P);
      for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const int ho = geo_.out_size(x_.h), wo = geo_.out_size(x_.w);
    const int K = in_ * geo_.k * geo_.k;
    const int P = ho * wo;
    Tensor<T> dx = zeros_like(x_);
    std::vector<T> cols(static_cast<std::size_t>(K) * P), dcols(cols.size());
    Eigen::Map<const Mat> W(weight_.value.data(), out_, K);
    Eigen::Map<Mat> dW(weight_.grad.data(), out_, K);
    for (int i = 0; i < x_.n; ++i) {
      geo_.im2col(x_.sample(i), x_.h, x_.w, ho, wo, cols.data());
      Eigen::Map<const Mat> G(g.sample(i), out_, P);
      Eigen::Map<const Mat> C(cols.data(), K, P);
      dW.noalias() += G * C.transpose();
      for (int o = 0; o < out_; ++o) bias_.grad[o] += G.row(o).sum();
      Eigen::Map<Mat>(dcols.data(), K, P).noalias() = W.transpose() * G;
      geo_.col2im(dcols.data(), x_.h, x_.w, ho, wo, dx.sample(i));
    }
    return dx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) override {
    out.emplace_back(join_name(prefix, "weight"), &weight_);
    out.emplace_back(join_name(prefix, "bias"), &bias_);
  }

 private:
  int in_, out_;
  ConvGeometry<T> geo_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> x_;
};

/// Transposed convolution; output side (n - 1) * stride - 2 * pad + kernel + output_pad.
/// Weight layout [in, out, k, k].
template <class T>
class ConvTranspose2d : public Module<T> {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ConvTranspose2d(int in, int out, int kernel, int stride, int pad, int output_pad, std::mt19937_64& rng,
                  double init_std = 0.02)
      : in_(in), out_(out), op_(output_pad), geo_{out, kernel, stride, pad},
        weight_(static_cast<std::size_t>(in) * out * kernel * kernel), bias_(static_cast<std::size_t>(out)) {
    std::normal_distribution<double> normal(0.0, init_std);
    for (auto& v : weight_.value) v = static_cast<T>(normal(rng));
  }

  int out_size(int n) const { return (n - 1) * geo_.s - 2 * geo_.p + geo_.k + op_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c != in_) throw std::invalid_argument("deconv expects " + std::to_string(in_) + " channels, got " + x.shape_string());
    x_ = x;
    const int ho = out_size(x.h), wo = out_size(x.w);
    const int K = out_ * geo_.k * geo_.k;
    const int P = x.h * x.w;
    Tensor<T> y(x.n, out_, ho, wo);
    std::vector<T> cols(static_cast<std::size_t>(K) * P);
    Eigen::Map<const Mat> W(weight_.value.data(), in_, K);
    for (int i = 0; i < x.n; ++i) {
      Eigen::Map<Mat>(cols.data(), K, P).noalias() = W.transpose() * Eigen::Map<const Mat>(x.sample(i), in_, P);
      geo_.col2im(cols.data(), ho, wo, x.h, x.w, y.sample(i));
      Eigen::Map<Mat> Y(y.sample(i), out_, static_cast<Eigen::Index>(ho) * wo);
      for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const int K = out_ * geo_.k * geo_.k;
    const int P = x_.h * x_.w;
    Tensor<T> dx = zeros_like(x_);
    std::vector<T> gcols(static_cast<std::size_t>(K) * P);
    Eigen::Map<const Mat> W(weight_.value.data(), in_, K);
    Eigen::Map<Mat> dW(weight_.grad.data(), in_, K);
    for (int i = 0; i < x_.n; ++i) {
      geo_.im2col(g.sample(i), g.h, g.w, x_.h, x_.w, gcols.data());
      Eigen::Map<const Mat> GC(gcols.data(), K, P);
      Eigen::Map<const Mat> X(x_.sample(i), in_, P);
      dW.noalias() += X * GC.transpose();
      Eigen::Map<Mat>(dx.sample(i), in_, P).noalias() = W * GC;
      Eigen::Map<const Mat> G(g.sample(i), out_, static_cast<Eigen::Index>(g.h) * g.w);
      for (int o = 0; o < out_; ++o) bias_.grad[o] += G.row(o).sum();
    }
    return dx;
  }

  void collect(const std::string& prefix, NamedParams<T>& out) override {
    out.emplace_back(join_name(prefix, "weight"), &weight_);
    out.emplace_back(join_name(prefix, "bias"), &bias_);
  }

 private:
  int in_, out_, op_;
  ConvGeometry<T> geo_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> x_;
};

template <class T>
class ReflectionPad2d : public Module<T> {
 public:
  explicit ReflectionPad2d(int pad) : p_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    if (p_ >= x.h || p_ >= x.w) throw std::invalid_argument("reflection pad larger than input " + x.shape_string());
    h_ = x.h;
    w_ = x.w;
    Tensor<T> y(x.n, x.c, x.h + 2 * p_, x.w + 2 * p_);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox) y.at(i, c, oy, ox) = x.at(i, c, reflect(oy - p_, h_), reflect(ox - p_, w_));
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.n, g.c, h_, w_);
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < g.c; ++c)
        for (int oy = 0; oy < g.h; ++oy)
          for (int ox = 0; ox < g.w; ++ox) dx.at(i, c, reflect(oy - p_, h_), reflect(ox - p_, w_)) += g.at(i, c, oy, ox);
    return dx;
  }

 private:
  static int reflect(int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); }
  int p_;
  int h_ = 0, w_ = 0;
};

/// Per-sample, per-channel normalisation without affine parameters.
template <class T>
class InstanceNorm : public Module<T> {
 public:
  explicit InstanceNorm(double eps = 1e-5) : eps_(eps) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    xhat_ = zeros_like(x);
    inv_std_.assign(static_cast<std::size_t>(x.n) * x.c, T(0));
    const std::size_t m = x.plane();
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const T* src = x.channel(i, c);
        double mean = 0;
        for (std::size_t k = 0; k < m; ++k) mean += src[k];
        mean /= m;
        double var = 0;
        for (std::size_t k = 0; k < m; ++k) var += (src[k] - mean) * (src[k] - mean);
        var /= m;
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(i) * x.c + c] = static_cast<T>(inv);
        T* dst = xhat_.channel(i, c);
        for (std::size_t k = 0; k < m; ++k) dst[k] = static_cast<T>((src[k] - mean) * inv);
      }
    return xhat_;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx = zeros_like(g);
    const std::size_t m = g.plane();
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < g.c; ++c) {
        const T* gc = g.channel(i, c);
        const T* xh = xhat_.channel(i, c);
        double gmean = 0, gxmean = 0;
        for (std::size_t k = 0; k < m; ++k) {
          gmean += gc[k];
          gxmean += static_cast<double>(gc[k]) * xh[k];
        }
        gmean /= m;
        gxmean /= m;
        const double inv = inv_std_[static_cast<std::size_t>(i) * g.c + c];
        T* d = dx.channel(i, c);
        for (std::size_t k = 0; k < m; ++k) d[k] = static_cast<T>(inv * (gc[k] - gmean - xh[k] * gxmean));
      }
    return dx;
  }

 private:
  double eps_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

/// slope = 0 gives ReLU.
template <class T>
class LeakyReLU : public Module<T> {
 public:
  explicit LeakyReLU(T slope = T(0)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > 0 ? v : v * slope_;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx = g;
    for (std::size_t k = 0; k < dx.size(); ++k) dx.data[k] *= x_.data[k] > 0 ? T(1) : slope_;
    return dx;
  }

 private:
  T slope_;
  Tensor<T> x_;
};

template <class T>
class Tanh : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    y_ = x;
    for (auto& v : y_.data) v = std::tanh(v);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx = g;
    for (std::size_t k = 0; k < dx.size(); ++k) dx.data[k] *= T(1) - y_.data[k] * y_.data[k];
    return dx;
  }

 private:
  Tensor<T> y_;
};

template <class T>
inline T sigmoid(T z) {
  return z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

/// Nearest-neighbour 2x upsampling.
template <class T>
class Upsample2x : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox) y.at(i, c, oy, ox) = x.at(i, c, oy / 2, ox / 2);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.n, g.c, g.h / 2, g.w / 2);
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < g.c; ++c)
        for (int oy = 0; oy < g.h; ++oy)
          for (int ox = 0; ox < g.w; ++ox) dx.at(i, c, oy / 2, ox / 2) += g.at(i, c, oy, ox);
    return dx;
  }
};

/// 3x3, stride 2, pad 1 average pooling that ignores padded taps.
template <class T>
class AvgPoolDown : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    h_ = x.h;
    w_ = x.w;
    Tensor<T> y(x.n, x.c, (x.h - 1) / 2 + 1, (x.w - 1) / 2 + 1);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox) {
            T sum = 0;
            int count = 0;
            for_taps(oy, ox, [&](int iy, int ix) {
              sum += x.at(i, c, iy, ix);
              ++count;
            });
            y.at(i, c, oy, ox) = sum / static_cast<T>(count);
          }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.n, g.c, h_, w_);
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < g.c; ++c)
        for (int oy = 0; oy < g.h; ++oy)
          for (int ox = 0; ox < g.w; ++ox) {
            int count = 0;
            for_taps(oy, ox, [&](int, int) { ++count; });
            const T share = g.at(i, c, oy, ox) / static_cast<T>(count);
            for_taps(oy, ox, [&](int iy, int ix) { dx.at(i, c, iy, ix) += share; });
          }
    return dx;
  }

 private:
  template <class F>
  void for_taps(int oy, int ox, F&& f) const {
    for (int iy = 2 * oy - 1; iy <= 2 * oy + 1; ++iy)
      for (int ix = 2 * ox - 1; ix <= 2 * ox + 1; ++ix)
        if (iy >= 0 && iy < h_ && ix >= 0 && ix < w_) f(iy, ix);
  }
  int h_ = 0, w_ = 0;
};

/// Output head: channels 0..2 -> (tanh + 1) / 2, channel 3 -> sigmoid.
template <class T>
class GarmentMaskHead : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c != 4) throw std::invalid_argument("garment/mask head expects 4 channels, got " + x.shape_string());
    y_ = x;
    for (int i = 0; i < x.n; ++i) {
      for (int c = 0; c < 3; ++c)
        for (T* p = y_.channel(i, c); p != y_.channel(i, c) + y_.plane(); ++p) *p = (std::tanh(*p) + T(1)) / T(2);
      for (T* p = y_.channel(i, 3); p != y_.channel(i, 3) + y_.plane(); ++p) *p = sigmoid(*p);
    }
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx = g;
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < 4; ++c) {
        const T* y = y_.channel(i, c);
        T* d = dx.channel(i, c);
        for (std::size_t k = 0; k < g.plane(); ++k) {
          // (tanh+1)/2 = y  =>  derivative 2 y (1 - y); sigmoid: y (1 - y).
          const T dy = y[k] * (T(1) - y[k]);
          d[k] *= c < 3 ? T(2) * dy : dy;
        }
      }
    return dx;
  }

 private:
  Tensor<T> y_;
};

template <class T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  template <class M, class... Args>
  M& add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *m;
    layers_.push_back(std::move(m));
    return ref;
  }
  void push(ModulePtr<T> m) { layers_.push_back(std::move(m)); }

  std::size_t size() const { return layers_.size(); }
  Module<T>& operator[](std::size_t i) { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = x;
    for (auto& l : layers_) y = l->forward(y);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }
  void collect(const std::string& prefix, NamedParams<T>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect(join_name(prefix, std::to_string(i)), out);
  }

 private:
  std::vector<ModulePtr<T>> layers_;
};

/// x + body(x) with body = pad, conv3, norm, relu, pad, conv3, norm.
template <class T>
class ResidualBlock : public Module<T> {
 public:
  ResidualBlock(int channels, std::mt19937_64& rng) {
    body_.template add<ReflectionPad2d<T>>(1);
    body_.template add<Conv2d<T>>(channels, channels, 3, 1, 0, rng);
    body_.template add<InstanceNorm<T>>();
    body_.template add<LeakyReLU<T>>(T(0));
    body_.template add<ReflectionPad2d<T>>(1);
    body_.template add<Conv2d<T>>(channels, channels, 3, 1, 0, rng);
    body_.template add<InstanceNorm<T>>();
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = body_.forward(x);
    for (std::size_t k = 0; k < y.size(); ++k) y.data[k] += x.data[k];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = body_.backward(g);
    for (std::size_t k = 0; k < d.size(); ++k) d.data[k] += g.data[k];
    return d;
  }
  void collect(const std::string& prefix, NamedParams<T>& out) override { body_.collect(join_name(prefix, "body"), out); }

 private:
  Sequential<T> body_;
};

}  // namespace tryon::nn
