#pragma once

#include <utility>
#include <vector>

#include "caseforge/nn/ops.hpp"

namespace caseforge {

struct HyperParams {
  double margin = 2.0;      // triplet margin m
  double lambda_tri = 1.0;  // weight on the triplet loss
  double lambda_i = 0.1;    // weight on the generator-side image adversarial term

  void validate() const {
    require(margin > 0, Errc::config_invalid, "margin must be > 0");
    require(lambda_tri >= 0 && lambda_i >= 0, Errc::config_invalid, "lambdas must be >= 0");
  }
};

// The five objective values reported per training step. Adversarial entries
// hold the joint value that the discriminator maximizes (so they are
// typically negative); disabled losses are reported as 0.
struct LossValues {
  double l_id = 0;
  double l_tri = 0;
  double l_adv_df = 0;
  double l_rec = 0;
  double l_adv_di = 0;

  bool all_finite() const {
    return std::isfinite(l_id) && std::isfinite(l_tri) && std::isfinite(l_adv_df) &&
           std::isfinite(l_rec) && std::isfinite(l_adv_di);
  }
};

namespace losses {

// ---------------------------------------------------------------------------
// graph builders (used by the trainer; the plain functions below evaluate
// these same graphs so there is a single formula path)
// ---------------------------------------------------------------------------

// Identity loss: sum of the two per-stream mean NLLs.
template <typename T>
Var<T> identity_graph(const Var<T>& logits_rgb, const Var<T>& logits_gray,
                      const std::vector<int>& labels) {
  require(logits_rgb->value.ndim() == 2 && logits_rgb->value.dim(1) >= 2, Errc::shape_mismatch,
          "identity loss: logits must be (B, K) with K >= 2");
  return ops::add(ops::softmax_nll(logits_rgb, labels), ops::softmax_nll(logits_gray, labels));
}

// Mean hinge over one stream: mean_i max(0, m + d_pos_i - d_neg_i).
template <typename T>
Var<T> triplet_stream_graph(const Var<T>& f, const std::vector<int64_t>& pos_idx,
                            const std::vector<int64_t>& neg_idx, T margin) {
  std::vector<int64_t> anchors(pos_idx.size());
  for (size_t i = 0; i < anchors.size(); ++i) anchors[i] = static_cast<int64_t>(i);
  auto fa = ops::gather_rows(f, anchors);
  auto d_pos = ops::row_l2_dist(fa, ops::gather_rows(f, pos_idx));
  auto d_neg = ops::row_l2_dist(fa, ops::gather_rows(f, neg_idx));
  return ops::mean_all(ops::relu(ops::affine(ops::sub(d_pos, d_neg), T(1), margin)));
}

// Triplet loss over both streams: mean over the 2B hinge terms.
template <typename T>
Var<T> triplet_graph(const Var<T>& f_rgb, const Var<T>& f_gray,
                     const std::vector<int64_t>& pos_idx, const std::vector<int64_t>& neg_idx,
                     T margin) {
  auto a = triplet_stream_graph(f_rgb, pos_idx, neg_idx, margin);
  auto b = triplet_stream_graph(f_gray, pos_idx, neg_idx, margin);
  return ops::scale(ops::add(a, b), T(0.5));
}

// Adversarial value E[log D(real)] + E[log(1 - D(fake))] shared by Eq. 5 and
// Eq. 7: the discriminator ascends it, the aligned/generating side uses the
// label-flipped surrogates below.
template <typename T>
Var<T> adversarial_value_graph(const Var<T>& probs_real, const Var<T>& probs_fake) {
  auto real_term = ops::mean_all(ops::log_elem(probs_real));
  auto fake_term = ops::mean_all(ops::log_elem(ops::affine(probs_fake, T(-1), T(1))));
  return ops::add(real_term, fake_term);
}

// Discriminator objective to minimize (= binary cross-entropy, real->1 fake->0).
template <typename T>
Var<T> discriminator_loss_graph(const Var<T>& probs_real, const Var<T>& probs_fake) {
  return ops::scale(adversarial_value_graph(probs_real, probs_fake), T(-1));
}

// Non-saturating label-flipped loss for the side trying to fool D.
template <typename T>
Var<T> fool_discriminator_loss_graph(const Var<T>& probs_fake) {
  return ops::scale(ops::mean_all(ops::log_elem(probs_fake)), T(-1));
}

template <typename T>
Var<T> reconstruction_graph(const Var<T>& x_hat, const Var<T>& x) {
  return ops::l1_mean(x_hat, x);
}

// ---------------------------------------------------------------------------
// plain-value API
// ---------------------------------------------------------------------------

template <typename T>
double identity_loss(const Tensor<T>& logits_rgb, const Tensor<T>& logits_gray,
                     const std::vector<int>& labels) {
  return static_cast<double>(
      identity_graph(constant(Tensor<T>(logits_rgb)), constant(Tensor<T>(logits_gray)), labels)
          ->value[0]);
}

// Distances between an anchor and its positive/negative (Eqs. 2-3).
template <typename T>
std::pair<double, double> triplet_distances(const Tensor<T>& f_anchor, const Tensor<T>& f_pos,
                                            const Tensor<T>& f_neg) {
  require(f_anchor.same_shape(f_pos) && f_anchor.same_shape(f_neg), Errc::shape_mismatch,
          "triplet_distances: dimension mismatch");
  const int64_t d = f_anchor.numel();
  auto row = [&](const Tensor<T>& v) { return constant(v.reshaped({1, d})); };
  auto a = row(f_anchor);
  const double d_pos = static_cast<double>(ops::row_l2_dist(a, row(f_pos))->value[0]);
  const double d_neg = static_cast<double>(ops::row_l2_dist(a, row(f_neg))->value[0]);
  return {d_pos, d_neg};
}

template <typename T>
double triplet_loss(const Tensor<T>& f_rgb, const Tensor<T>& f_gray,
                    const std::vector<int>& labels, const std::vector<int64_t>& pos_idx,
                    const std::vector<int64_t>& neg_idx, double margin) {
  require(f_rgb.ndim() == 2 && f_rgb.same_shape(f_gray), Errc::shape_mismatch,
          "triplet_loss: feature matrices must both be (B, d)");
  const int64_t b = f_rgb.dim(0);
  require(static_cast<int64_t>(labels.size()) == b &&
              static_cast<int64_t>(pos_idx.size()) == b &&
              static_cast<int64_t>(neg_idx.size()) == b,
          Errc::shape_mismatch, "triplet_loss: labels/indices must have length B");
  for (int64_t i = 0; i < b; ++i) {
    const int64_t p = pos_idx[static_cast<size_t>(i)], n = neg_idx[static_cast<size_t>(i)];
    require(p >= 0 && p < b && n >= 0 && n < b, Errc::invalid_argument,
            "triplet_loss: index out of range at row " + std::to_string(i));
    require(labels[static_cast<size_t>(p)] == labels[static_cast<size_t>(i)],
            Errc::invalid_argument, "triplet_loss: positive label mismatch at row " + std::to_string(i));
    require(labels[static_cast<size_t>(n)] != labels[static_cast<size_t>(i)],
            Errc::invalid_argument, "triplet_loss: negative shares label at row " + std::to_string(i));
  }
  return static_cast<double>(triplet_graph(constant(Tensor<T>(f_rgb)), constant(Tensor<T>(f_gray)),
                                           pos_idx, neg_idx, static_cast<T>(margin))
                                 ->value[0]);
}

template <typename T>
void check_probs(const Tensor<T>& p, const char* who) {
  for (int64_t i = 0; i < p.numel(); ++i)
    require(p[i] > T(0) && p[i] < T(1), Errc::invalid_argument,
            std::string(who) + ": probability outside (0,1) at index " + std::to_string(i));
}

// Eq. 5 value: E[log D_F(f_rgb)] + E[log(1 - D_F(f_gray))].
template <typename T>
double feature_adv_loss(const Tensor<T>& probs_rgb, const Tensor<T>& probs_gray) {
  check_probs(probs_rgb, "feature_adv_loss");
  check_probs(probs_gray, "feature_adv_loss");
  return static_cast<double>(adversarial_value_graph(constant(Tensor<T>(probs_rgb)),
                                                     constant(Tensor<T>(probs_gray)))
                                 ->value[0]);
}

// Eq. 6: per-element mean L1.
template <typename T>
double reconstruction_loss(const Tensor<T>& x_hat, const Tensor<T>& x) {
  return static_cast<double>(
      reconstruction_graph(constant(Tensor<T>(x_hat)), constant(Tensor<T>(x)))->value[0]);
}

// Eq. 7 value, same form as Eq. 5 with real images and synthesized ones.
template <typename T>
double image_adv_loss(const Tensor<T>& probs_real, const Tensor<T>& probs_fake) {
  check_probs(probs_real, "image_adv_loss");
  check_probs(probs_fake, "image_adv_loss");
  return static_cast<double>(adversarial_value_graph(constant(Tensor<T>(probs_real)),
                                                     constant(Tensor<T>(probs_fake)))
                                 ->value[0]);
}

}  // namespace losses
}  // namespace caseforge
