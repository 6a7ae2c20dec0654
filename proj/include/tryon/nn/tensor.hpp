#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tryon::nn {

/// Dense NCHW tensor.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return c * plane(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }
  T* channel(int i, int ch) { return sample(i) + ch * plane(); }
  const T* channel(int i, int ch) const { return sample(i) + ch * plane(); }
  T& at(int i, int ch, int y, int x) { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }
  T at(int i, int ch, int y, int x) const { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }

  std::string shape_string() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.n, t.c, t.h, t.w);
}

/// Channel-wise concatenation of equally sized batches.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  assert(first >= 0 && first + count <= t.c);
  Tensor<T> out(t.n, count, t.h, t.w);
  for (int i = 0; i < t.n; ++i)
    std::copy(t.channel(i, first), t.channel(i, first) + count * t.plane(), out.sample(i));
  return out;
}

/// Stacks two batches along N.
template <class T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.c != b.c || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat_batch: " + a.shape_string() + " vs " + b.shape_string());
  Tensor<T> out(a.n + b.n, a.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, int first, int count) {
  Tensor<T> out(count, t.c, t.h, t.w);
  std::copy(t.sample(first), t.sample(first) + count * t.sample_size(), out.data.begin());
  return out;
}

}  // namespace tryon::nn
