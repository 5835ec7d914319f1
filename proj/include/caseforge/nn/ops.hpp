#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "caseforge/core/autodiff.hpp"

namespace caseforge::ops {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.same_shape(b->value), Errc::shape_mismatch,
          "add: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  Tensor<T> out = a->value;
  const T* pb = b->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const T* g = n.grad.data();
    for (int k = 0; k < 2; ++k) {
      if (!n.parents[k]->requires_grad) continue;
      T* pg = n.parents[k]->ensure_grad().data();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a->value.same_shape(b->value), Errc::shape_mismatch,
          "sub: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  Tensor<T> out = a->value;
  const T* pb = b->value.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const T* g = n.grad.data();
    if (n.parents[0]->requires_grad) {
      T* pg = n.parents[0]->ensure_grad().data();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      T* pg = n.parents[1]->ensure_grad().data();
      for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] -= g[i];
    }
  });
}

// y = alpha*x + beta, elementwise.
template <typename T>
Var<T> affine(const Var<T>& x, T alpha, T beta) {
  Tensor<T> out = x->value;
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = alpha * po[i] + beta;
  return make_node<T>(std::move(out), {x}, [alpha](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T* g = n.grad.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += alpha * g[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T alpha) {
  return affine(x, alpha, T(0));
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x->value;
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i)
    if (po[i] < T(0)) po[i] *= slope;
  return make_node<T>(std::move(out), {x}, [slope](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T* g = n.grad.data();
    const T* px = n.parents[0]->value.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      pg[i] += px[i] > T(0) ? g[i] : slope * g[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T(0));
}

// Sigmoid head with output clamped into [eps, 1-eps]; gradient is zero in the
// clamped region.
template <typename T>
Var<T> sigmoid_clamped(const Var<T>& x, T eps) {
  Tensor<T> out = x->value;
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    T s = T(1) / (T(1) + std::exp(-po[i]));
    po[i] = std::min(T(1) - eps, std::max(eps, s));
  }
  return make_node<T>(std::move(out), {x}, [eps](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T* g = n.grad.data();
    const T* px = n.parents[0]->value.data();
    const T* py = n.value.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      T s = T(1) / (T(1) + std::exp(-px[i]));
      if (s > eps && s < T(1) - eps) pg[i] += g[i] * py[i] * (T(1) - py[i]);
    }
  });
}

// Bounded image activation: (tanh(x) + 1) / 2 in [0, 1].
template <typename T>
Var<T> tanh01(const Var<T>& x) {
  Tensor<T> out = x->value;
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = (std::tanh(po[i]) + T(1)) / T(2);
  return make_node<T>(std::move(out), {x}, [](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T* g = n.grad.data();
    const T* py = n.value.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      T t = T(2) * py[i] - T(1);  // tanh(x)
      pg[i] += g[i] * (T(1) - t * t) / T(2);
    }
  });
}

template <typename T>
Var<T> log_elem(const Var<T>& x) {
  Tensor<T> out = x->value;
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::log(po[i]);
  return make_node<T>(std::move(out), {x}, [](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T* g = n.grad.data();
    const T* px = n.parents[0]->value.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += g[i] / px[i];
  });
}

// ---------------------------------------------------------------------------
// reductions / reshaping
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  T acc = T(0);
  const T* px = x->value.data();
  for (int64_t i = 0; i < x->value.numel(); ++i) acc += px[i];
  const T inv = T(1) / static_cast<T>(x->value.numel());
  return make_node<T>(Tensor<T>::scalar(acc * inv), {x}, [inv](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T g = n.grad[0] * inv;
    for (int64_t i = 0; i < n.parents[0]->value.numel(); ++i) pg[i] += g;
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> out = x->value.reshaped(std::move(s));
  return make_node<T>(std::move(out), {x}, [](Node<T>& n) {
    T* pg = n.parents[0]->ensure_grad().data();
    const T* g = n.grad.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += g[i];
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  require(sa.size() == 4 && sb.size() == 4 && sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
          Errc::shape_mismatch,
          "concat_channels: " + shape_str(sa) + " vs " + shape_str(sb));
  const int64_t n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
  Tensor<T> out({n, ca + cb, sa[2], sa[3]});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(a->value.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b->value.data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return make_node<T>(std::move(out), {a, b}, [n, ca, cb, hw](Node<T>& n_) {
    const T* g = n_.grad.data();
    if (n_.parents[0]->requires_grad) {
      T* pg = n_.parents[0]->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < ca * hw; ++j) pg[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
    }
    if (n_.parents[1]->requires_grad) {
      T* pg = n_.parents[1]->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < cb * hw; ++j)
          pg[i * cb * hw + j] += g[(i * (ca + cb) + ca) * hw + j];
    }
  });
}

// v: (N, C) -> (N, C, H, W), each channel value tiled over the map.
template <typename T>
Var<T> broadcast_to_map(const Var<T>& v, int64_t h, int64_t w) {
  const auto& s = v->value.shape();
  require(s.size() == 2, Errc::shape_mismatch, "broadcast_to_map: expected (N, C)");
  const int64_t n = s[0], c = s[1];
  Tensor<T> out({n, c, h, w});
  for (int64_t i = 0; i < n * c; ++i)
    std::fill_n(out.data() + i * h * w, h * w, v->value[i]);
  return make_node<T>(std::move(out), {v}, [n, c, h, w](Node<T>& n_) {
    T* pg = n_.parents[0]->ensure_grad().data();
    const T* g = n_.grad.data();
    for (int64_t i = 0; i < n * c; ++i) {
      T acc = T(0);
      for (int64_t j = 0; j < h * w; ++j) acc += g[i * h * w + j];
      pg[i] += acc;
    }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& s = x->value.shape();
  require(s.size() == 4, Errc::shape_mismatch, "global_avg_pool: expected NCHW");
  const int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  Tensor<T> out({n, c});
  const T inv = T(1) / static_cast<T>(hw);
  for (int64_t i = 0; i < n * c; ++i) {
    T acc = T(0);
    const T* px = x->value.data() + i * hw;
    for (int64_t j = 0; j < hw; ++j) acc += px[j];
    out[i] = acc * inv;
  }
  return make_node<T>(std::move(out), {x}, [n, c, hw, inv](Node<T>& n_) {
    T* pg = n_.parents[0]->ensure_grad().data();
    const T* g = n_.grad.data();
    for (int64_t i = 0; i < n * c; ++i) {
      const T gv = g[i] * inv;
      T* p = pg + i * hw;
      for (int64_t j = 0; j < hw; ++j) p[j] += gv;
    }
  });
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
  const auto& s = x->value.shape();
  require(s.size() == 4, Errc::shape_mismatch, "upsample_nearest2: expected NCHW");
  const int64_t nc = s[0] * s[1], h = s[2], w = s[3];
  Tensor<T> out({s[0], s[1], 2 * h, 2 * w});
  for (int64_t i = 0; i < nc; ++i) {
    const T* px = x->value.data() + i * h * w;
    T* po = out.data() + i * 4 * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx) {
        const T v = px[y * w + xx];
        T* row0 = po + (2 * y) * 2 * w + 2 * xx;
        row0[0] = v;
        row0[1] = v;
        row0[2 * w] = v;
        row0[2 * w + 1] = v;
      }
  }
  return make_node<T>(std::move(out), {x}, [nc, h, w](Node<T>& n_) {
    T* pg = n_.parents[0]->ensure_grad().data();
    const T* g = n_.grad.data();
    for (int64_t i = 0; i < nc; ++i) {
      const T* go = g + i * 4 * h * w;
      T* p = pg + i * h * w;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) {
          const T* row0 = go + (2 * y) * 2 * w + 2 * xx;
          p[y * w + xx] += row0[0] + row0[1] + row0[2 * w] + row0[2 * w + 1];
        }
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::vector<int64_t> idx) {
  const auto& s = x->value.shape();
  require(s.size() == 2, Errc::shape_mismatch, "gather_rows: expected (N, D)");
  const int64_t d = s[1];
  for (int64_t i : idx)
    require(i >= 0 && i < s[0], Errc::invalid_argument, "gather_rows: index out of range");
  Tensor<T> out({static_cast<int64_t>(idx.size()), d});
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x->value.data() + idx[r] * d, d, out.data() + static_cast<int64_t>(r) * d);
  return make_node<T>(std::move(out), {x}, [idx = std::move(idx), d](Node<T>& n_) {
    T* pg = n_.parents[0]->ensure_grad().data();
    const T* g = n_.grad.data();
    for (size_t r = 0; r < idx.size(); ++r) {
      T* dst = pg + idx[r] * d;
      const T* src = g + static_cast<int64_t>(r) * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

// Per-row Euclidean distance between two (N, D) matrices -> (N,).
template <typename T>
Var<T> row_l2_dist(const Var<T>& a, const Var<T>& b) {
  require(a->value.same_shape(b->value) && a->value.ndim() == 2, Errc::shape_mismatch,
          "row_l2_dist: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  const int64_t n = a->value.dim(0), d = a->value.dim(1);
  Tensor<T> out({n});
  for (int64_t i = 0; i < n; ++i) {
    T acc = T(0);
    const T* pa = a->value.data() + i * d;
    const T* pb = b->value.data() + i * d;
    for (int64_t j = 0; j < d; ++j) {
      T diff = pa[j] - pb[j];
      acc += diff * diff;
    }
    out[i] = std::sqrt(acc);
  }
  return make_node<T>(std::move(out), {a, b}, [n, d](Node<T>& n_) {
    const T* g = n_.grad.data();
    const T* dist = n_.value.data();
    const T* pa = n_.parents[0]->value.data();
    const T* pb = n_.parents[1]->value.data();
    for (int64_t i = 0; i < n; ++i) {
      if (dist[i] <= T(0)) continue;  // subgradient 0 at coincident points
      const T s = g[i] / dist[i];
      for (int64_t j = 0; j < d; ++j) {
        T diff = (pa[i * d + j] - pb[i * d + j]) * s;
        if (n_.parents[0]->requires_grad) n_.parents[0]->ensure_grad()[i * d + j] += diff;
        if (n_.parents[1]->requires_grad) n_.parents[1]->ensure_grad()[i * d + j] -= diff;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// dense / conv / norm
// ---------------------------------------------------------------------------

// x: (B, In), w: (Out, In), b: (Out) -> (B, Out)
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& sx = x->value.shape();
  const auto& sw = w->value.shape();
  require(sx.size() == 2 && sw.size() == 2 && sx[1] == sw[1], Errc::shape_mismatch,
          "linear: input " + shape_str(sx) + " incompatible with weight " + shape_str(sw));
  const int64_t bsz = sx[0], in = sx[1], out_dim = sw[0];
  require(b->value.numel() == out_dim, Errc::shape_mismatch, "linear: bad bias size");
  Tensor<T> out({bsz, out_dim});
  {
    ECMap<T> X(x->value.data(), bsz, in);
    ECMap<T> W(w->value.data(), out_dim, in);
    EMap<T> Y(out.data(), bsz, out_dim);
    Y.noalias() = X * W.transpose();
    for (int64_t i = 0; i < bsz; ++i)
      for (int64_t j = 0; j < out_dim; ++j) out.at(i, j) += b->value[j];
  }
  return make_node<T>(std::move(out), {x, w, b}, [bsz, in, out_dim](Node<T>& n_) {
    ECMap<T> G(n_.grad.data(), bsz, out_dim);
    ECMap<T> X(n_.parents[0]->value.data(), bsz, in);
    ECMap<T> W(n_.parents[1]->value.data(), out_dim, in);
    if (n_.parents[0]->requires_grad) {
      EMap<T> GX(n_.parents[0]->ensure_grad().data(), bsz, in);
      GX.noalias() += G * W;
    }
    if (n_.parents[1]->requires_grad) {
      EMap<T> GW(n_.parents[1]->ensure_grad().data(), out_dim, in);
      GW.noalias() += G.transpose() * X;
    }
    if (n_.parents[2]->requires_grad) {
      T* gb = n_.parents[2]->ensure_grad().data();
      for (int64_t i = 0; i < bsz; ++i)
        for (int64_t j = 0; j < out_dim; ++j) gb[j] += n_.grad[i * out_dim + j];
    }
  });
}

namespace detail {

// im2col for one image: x (C, H, W) -> col (C*kh*kw, Ho*Wo)
template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* col) {
  for (int64_t ic = 0; ic < c; ++ic) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* dst = col + ((ic * kh + ky) * kw + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst + oy * wo, wo, T(0));
            continue;
          }
          const T* src = x + (ic * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            dst[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* x) {
  for (int64_t ic = 0; ic < c; ++ic) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* src = col + ((ic * kh + ky) * kw + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (ic * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: (N, C, H, W), w: (OC, C, kh, kw), b: (OC). Zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad) {
  const auto& sx = x->value.shape();
  const auto& sw = w->value.shape();
  require(sx.size() == 4 && sw.size() == 4 && sx[1] == sw[1], Errc::shape_mismatch,
          "conv2d: input " + shape_str(sx) + " incompatible with weight " + shape_str(sw));
  const int64_t n = sx[0], c = sx[1], h = sx[2], wdt = sx[3];
  const int64_t oc = sw[0], kh = sw[2], kw = sw[3];
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wdt + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, Errc::shape_mismatch, "conv2d: empty output for " + shape_str(sx));
  const int64_t krows = c * kh * kw;

  Tensor<T> out({n, oc, ho, wo});
  {
    std::vector<T> col(static_cast<size_t>(krows * ho * wo));
    ECMap<T> W(w->value.data(), oc, krows);
    for (int64_t i = 0; i < n; ++i) {
      detail::im2col(x->value.data() + i * c * h * wdt, c, h, wdt, kh, kw, stride, pad, ho, wo,
                     col.data());
      ECMap<T> C(col.data(), krows, ho * wo);
      EMap<T> O(out.data() + i * oc * ho * wo, oc, ho * wo);
      O.noalias() = W * C;
      for (int64_t j = 0; j < oc; ++j)
        O.row(j).array() += b->value[j];
    }
  }
  return make_node<T>(std::move(out), {x, w, b},
                      [n, c, h, wdt, oc, kh, kw, stride, pad, ho, wo, krows](Node<T>& n_) {
    auto& xp = *n_.parents[0];
    auto& wp = *n_.parents[1];
    auto& bp = *n_.parents[2];
    ECMap<T> W(wp.value.data(), oc, krows);
    std::vector<T> col(static_cast<size_t>(krows * ho * wo));
    std::vector<T> dcol(static_cast<size_t>(krows * ho * wo));
    if (xp.requires_grad) xp.ensure_grad();
    if (wp.requires_grad) wp.ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      ECMap<T> G(n_.grad.data() + i * oc * ho * wo, oc, ho * wo);
      if (wp.requires_grad) {
        detail::im2col(xp.value.data() + i * c * h * wdt, c, h, wdt, kh, kw, stride, pad, ho, wo,
                       col.data());
        ECMap<T> C(col.data(), krows, ho * wo);
        EMap<T> GW(wp.grad.data(), oc, krows);
        GW.noalias() += G * C.transpose();
      }
      if (xp.requires_grad) {
        EMap<T> DC(dcol.data(), krows, ho * wo);
        DC.noalias() = W.transpose() * G;
        detail::col2im_add(dcol.data(), c, h, wdt, kh, kw, stride, pad, ho, wo,
                           xp.grad.data() + i * c * h * wdt);
      }
    }
    if (bp.requires_grad) {
      T* gb = bp.ensure_grad().data();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < oc; ++j) {
          const T* g = n_.grad.data() + (i * oc + j) * ho * wo;
          T acc = T(0);
          for (int64_t k = 0; k < ho * wo; ++k) acc += g[k];
          gb[j] += acc;
        }
    }
  });
}

// Per-sample, per-channel normalization over the spatial extent, with affine
// parameters gamma/beta of size C.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const auto& s = x->value.shape();
  require(s.size() == 4, Errc::shape_mismatch, "instance_norm: expected NCHW");
  const int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  require(gamma->value.numel() == c && beta->value.numel() == c, Errc::shape_mismatch,
          "instance_norm: affine params must have size C");
  Tensor<T> out(s);
  Tensor<T> xhat(s);
  Tensor<T> inv_std({n, c});
  const T inv_m = T(1) / static_cast<T>(hw);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* px = x->value.data() + (i * c + ch) * hw;
      T mu = T(0);
      for (int64_t j = 0; j < hw; ++j) mu += px[j];
      mu *= inv_m;
      T var = T(0);
      for (int64_t j = 0; j < hw; ++j) {
        T d = px[j] - mu;
        var += d * d;
      }
      var *= inv_m;
      const T is = T(1) / std::sqrt(var + eps);
      inv_std.at(i, ch) = is;
      const T g = gamma->value[ch], bb = beta->value[ch];
      T* ph = xhat.data() + (i * c + ch) * hw;
      T* po = out.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        ph[j] = (px[j] - mu) * is;
        po[j] = g * ph[j] + bb;
      }
    }
  }
  return make_node<T>(std::move(out), {x, gamma, beta},
                      [n, c, hw, inv_m, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)](Node<T>& n_) {
    auto& xp = *n_.parents[0];
    auto& gp = *n_.parents[1];
    auto& bp = *n_.parents[2];
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* g = n_.grad.data() + (i * c + ch) * hw;
        const T* ph = xhat.data() + (i * c + ch) * hw;
        if (gp.requires_grad) {
          T acc = T(0);
          for (int64_t j = 0; j < hw; ++j) acc += g[j] * ph[j];
          gp.ensure_grad()[ch] += acc;
        }
        if (bp.requires_grad) {
          T acc = T(0);
          for (int64_t j = 0; j < hw; ++j) acc += g[j];
          bp.ensure_grad()[ch] += acc;
        }
        if (xp.requires_grad) {
          const T gam = gp.value[ch];
          const T is = inv_std.at(i, ch);
          T mean_g = T(0), mean_gh = T(0);
          for (int64_t j = 0; j < hw; ++j) {
            mean_g += g[j];
            mean_gh += g[j] * ph[j];
          }
          mean_g *= inv_m;
          mean_gh *= inv_m;
          T* px = xp.ensure_grad().data() + (i * c + ch) * hw;
          for (int64_t j = 0; j < hw; ++j)
            px[j] += gam * is * (g[j] - mean_g - ph[j] * mean_gh);
        }
      }
    }
  });
}

// Mean negative log-likelihood of a softmax over logits (B, K).
template <typename T>
Var<T> softmax_nll(const Var<T>& logits, const std::vector<int>& labels) {
  const auto& s = logits->value.shape();
  require(s.size() == 2, Errc::shape_mismatch, "softmax_nll: expected (B, K)");
  const int64_t bsz = s[0], k = s[1];
  require(static_cast<int64_t>(labels.size()) == bsz, Errc::shape_mismatch,
          "softmax_nll: labels size mismatch");
  for (int y : labels)
    require(y >= 0 && y < k, Errc::label_out_of_range,
            "softmax_nll: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
  Tensor<T> probs({bsz, k});
  T loss = T(0);
  for (int64_t i = 0; i < bsz; ++i) {
    const T* z = logits->value.data() + i * k;
    T zmax = z[0];
    for (int64_t j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    T denom = T(0);
    for (int64_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    const T lse = zmax + std::log(denom);
    for (int64_t j = 0; j < k; ++j) probs.at(i, j) = std::exp(z[j] - lse);
    loss += lse - z[labels[static_cast<size_t>(i)]];
  }
  loss /= static_cast<T>(bsz);
  return make_node<T>(Tensor<T>::scalar(loss), {logits},
                      [bsz, k, labels, probs = std::move(probs)](Node<T>& n_) {
    T* pg = n_.parents[0]->ensure_grad().data();
    const T g = n_.grad[0] / static_cast<T>(bsz);
    for (int64_t i = 0; i < bsz; ++i) {
      for (int64_t j = 0; j < k; ++j) pg[i * k + j] += g * probs.at(i, j);
      pg[i * k + labels[static_cast<size_t>(i)]] -= g;
    }
  });
}

// Mean absolute difference over all elements.
template <typename T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b) {
  require(a->value.same_shape(b->value), Errc::shape_mismatch,
          "l1_mean: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  const int64_t m = a->value.numel();
  const T inv = T(1) / static_cast<T>(m);
  T acc = T(0);
  for (int64_t i = 0; i < m; ++i) acc += std::abs(a->value[i] - b->value[i]);
  return make_node<T>(Tensor<T>::scalar(acc * inv), {a, b}, [m, inv](Node<T>& n_) {
    const T g = n_.grad[0] * inv;
    const T* pa = n_.parents[0]->value.data();
    const T* pb = n_.parents[1]->value.data();
    for (int64_t i = 0; i < m; ++i) {
      const T d = pa[i] - pb[i];
      const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (n_.parents[0]->requires_grad) n_.parents[0]->ensure_grad()[i] += sg;
      if (n_.parents[1]->requires_grad) n_.parents[1]->ensure_grad()[i] -= sg;
    }
  });
}

}  // namespace caseforge::ops
