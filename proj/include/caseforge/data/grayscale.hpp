#pragma once

#include "caseforge/core/tensor.hpp"

namespace caseforge {

// ITU-R BT.601 luminance weights.
inline constexpr float kGrayR = 0.299f;
inline constexpr float kGrayG = 0.587f;
inline constexpr float kGrayB = 0.114f;

// Luma of one pixel, duplicated across channels by the callers. Pixels with
// equal channels are returned unchanged so the transform is an exact fixed
// point on already-gray images.
inline float gray_value(float r, float g, float b) {
  if (r == g && g == b) return r;
  float y = kGrayR * r + kGrayG * g + kGrayB * b;
  return std::min(1.0f, std::max(0.0f, y));
}

// (H, W, 3) -> (H, W, 3) with three identical channels.
inline Tensor<float> to_grayscale(const Tensor<float>& img) {
  const auto& s = img.shape();
  require(s.size() == 3 && s[2] == 3, Errc::shape_mismatch,
          "to_grayscale: expected (H, W, 3), got " + shape_str(s));
  Tensor<float> out(s);
  const int64_t npix = s[0] * s[1];
  for (int64_t i = 0; i < npix; ++i) {
    const float y = gray_value(img[3 * i], img[3 * i + 1], img[3 * i + 2]);
    out[3 * i] = y;
    out[3 * i + 1] = y;
    out[3 * i + 2] = y;
  }
  return out;
}

// Batched (B, H, W, 3) variant.
inline Tensor<float> to_grayscale_batch(const Tensor<float>& batch) {
  const auto& s = batch.shape();
  require(s.size() == 4 && s[3] == 3, Errc::shape_mismatch,
          "to_grayscale_batch: expected (B, H, W, 3), got " + shape_str(s));
  Tensor<float> out(s);
  const int64_t npix = s[0] * s[1] * s[2];
  for (int64_t i = 0; i < npix; ++i) {
    const float y = gray_value(batch[3 * i], batch[3 * i + 1], batch[3 * i + 2]);
    out[3 * i] = y;
    out[3 * i + 1] = y;
    out[3 * i + 2] = y;
  }
  return out;
}

}  // namespace caseforge
