#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "caseforge/core/rng.hpp"
#include "caseforge/nn/ops.hpp"

namespace caseforge::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Fan-in scaled normal init: w ~ N(0, (gain / sqrt(fan_in))^2).
template <typename T>
void init_fan_in(Tensor<T>& w, int64_t fan_in, double gain, Rng& rng) {
  const double std = gain / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * std);
}

inline constexpr double kLreluSlope = 0.2;
// sqrt(2 / (1 + slope^2)) for the leaky relu used throughout.
inline const double kLreluGain = std::sqrt(2.0 / (1.0 + kLreluSlope * kLreluSlope));

template <typename T>
struct Linear {
  Var<T> w, b;

  Linear() = default;
  Linear(int64_t in, int64_t out, double gain, Rng& rng) {
    Tensor<T> wt({out, in});
    init_fan_in(wt, in, gain, rng);
    w = make_leaf(std::move(wt), true);
    b = make_leaf(Tensor<T>::zeros({out}), true);
  }

  Var<T> forward(const Var<T>& x) const { return ops::linear(x, w, b); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int64_t stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(int64_t in, int64_t out, int64_t k, int64_t stride_, int64_t pad_, double gain, Rng& rng)
      : stride(stride_), pad(pad_) {
    Tensor<T> wt({out, in, k, k});
    init_fan_in(wt, in * k * k, gain, rng);
    w = make_leaf(std::move(wt), true);
    b = make_leaf(Tensor<T>::zeros({out}), true);
  }

  Var<T> forward(const Var<T>& x) const { return ops::conv2d(x, w, b, stride, pad); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

template <typename T>
struct InstanceNorm2d {
  Var<T> gamma, beta;

  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int64_t c) {
    gamma = make_leaf(Tensor<T>::full({c}, T(1)), true);
    beta = make_leaf(Tensor<T>::zeros({c}), true);
  }

  Var<T> forward(const Var<T>& x) const { return ops::instance_norm(x, gamma, beta); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

// conv -> instance norm -> leaky relu
template <typename T>
struct ConvBlock {
  Conv2d<T> conv;
  InstanceNorm2d<T> norm;

  ConvBlock() = default;
  ConvBlock(int64_t in, int64_t out, int64_t stride, Rng& rng)
      : conv(in, out, 3, stride, 1, kLreluGain, rng), norm(out) {}

  Var<T> forward(const Var<T>& x) const {
    return ops::leaky_relu(norm.forward(conv.forward(x)), T(kLreluSlope));
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    conv.collect(out, prefix + ".conv");
    norm.collect(out, prefix + ".norm");
  }
};

// Two 3x3 convs with instance norm and a skip connection.
template <typename T>
struct ResBlock {
  Conv2d<T> conv1, conv2;
  InstanceNorm2d<T> norm1, norm2;

  ResBlock() = default;
  ResBlock(int64_t c, Rng& rng)
      : conv1(c, c, 3, 1, 1, kLreluGain, rng),
        conv2(c, c, 3, 1, 1, kLreluGain, rng),
        norm1(c),
        norm2(c) {}

  Var<T> forward(const Var<T>& x) const {
    auto h = ops::leaky_relu(norm1.forward(conv1.forward(x)), T(kLreluSlope));
    h = norm2.forward(conv2.forward(h));
    return ops::leaky_relu(ops::add(x, h), T(kLreluSlope));
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    conv1.collect(out, prefix + ".conv1");
    norm1.collect(out, prefix + ".norm1");
    conv2.collect(out, prefix + ".conv2");
    norm2.collect(out, prefix + ".norm2");
  }
};

}  // namespace caseforge::nn
