#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tryon/nn/layers.hpp"

namespace tryon::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Moments are kept per parameter, in list order.
template <class T>
class Adam {
 public:
  Adam(NamedParams<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& [name, p] : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long long steps() const { return t_; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param<T>& p = *params_[i].second;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m[k] = cfg_.beta1 * m[k] + (1 - cfg_.beta1) * g;
        v[k] = cfg_.beta2 * v[k] + (1 - cfg_.beta2) * g * g;
        p.value[k] = static_cast<T>(p.value[k] - cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  // State access for checkpointing.
  const NamedParams<T>& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  NamedParams<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long long t_ = 0;
};

}  // namespace tryon::nn
