#pragma once

#include <cmath>
#include <vector>

#include "caseforge/nn/modules.hpp"

namespace caseforge::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global norm; <= 0 disables
};

// Adaptive moment estimation over one parameter group. Moment buffers are
// keyed by parameter order, which is fixed by the module tree.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.push_back(Tensor<T>::zeros(p.var->value.shape()));
      v_.push_back(Tensor<T>::zeros(p.var->value.shape()));
    }
  }

  const ParamList<T>& params() const { return params_; }
  AdamConfig& config() { return cfg_; }
  int64_t step_count() const { return t_; }

  void zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
  }

  void step() {
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto& p : params_) {
        if (!p.var->grad.numel()) continue;
        for (int64_t i = 0; i < p.var->grad.numel(); ++i) {
          const double g = static_cast<double>(p.var->grad[i]);
          sq += g * g;
        }
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) {
        const T s = static_cast<T>(cfg_.grad_clip / norm);
        for (auto& p : params_) {
          if (!p.var->grad.numel()) continue;
          for (int64_t i = 0; i < p.var->grad.numel(); ++i) p.var->grad[i] *= s;
        }
      }
    }
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
    for (size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k].var;
      if (!p.grad.numel()) continue;
      T* w = p.value.data();
      const T* g = p.grad.data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  // Moment buffers + step count, exposed for exact checkpoint round-trips.
  std::vector<Tensor<T>>& moments_m() { return m_; }
  std::vector<Tensor<T>>& moments_v() { return v_; }
  int64_t& step_count_mutable() { return t_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace caseforge::nn
