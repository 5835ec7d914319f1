#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "caseforge/core/rng.hpp"
#include "caseforge/core/tensor.hpp"

namespace caseforge {

struct Rgb {
  float r = 0, g = 0, b = 0;
};

inline float luma(const Rgb& c) { return 0.299f * c.r + 0.587f * c.g + 0.114f * c.b; }

// Clothing palette. Colors are spread around the hue wheel but pinned to a
// common luminance, so clothing variation lives almost entirely in hue: the
// identity cue of this dataset is body shape, clothing color is a nuisance
// variable that vanishes under grayscale conversion (up to 8-bit rounding).
inline Rgb iso_luma_color(int index, int palette_size, double target_luma) {
  const double hue = std::fmod(360.0 * index / std::max(1, palette_size) +
                                   137.50776405 * (index % 2),
                               360.0);
  const double hp = hue / 60.0;
  const double x = 1.0 - std::abs(std::fmod(hp, 2.0) - 1.0);
  double pr = 0, pg = 0, pb = 0;
  switch (static_cast<int>(hp)) {
    case 0: pr = 1; pg = x; break;
    case 1: pr = x; pg = 1; break;
    case 2: pg = 1; pb = x; break;
    case 3: pg = x; pb = 1; break;
    case 4: pr = x; pb = 1; break;
    default: pr = 1; pb = x; break;
  }
  const double py = 0.299 * pr + 0.587 * pg + 0.114 * pb;
  const double dr = pr - py, dg = pg - py, db = pb - py;  // zero-luma direction
  double smax = 1e9;
  for (double d : {dr, dg, db}) {
    if (d > 1e-12) smax = std::min(smax, (1.0 - target_luma) / d);
    if (d < -1e-12) smax = std::min(smax, -target_luma / d);
  }
  const double s = 0.92 * smax;
  Rgb c{static_cast<float>(target_luma + s * dr), static_cast<float>(target_luma + s * dg),
        static_cast<float>(target_luma + s * db)};
  c.r = std::clamp(c.r, 0.0f, 1.0f);
  c.g = std::clamp(c.g, 0.0f, 1.0f);
  c.b = std::clamp(c.b, 0.0f, 1.0f);
  return c;
}

// Normalized body-shape parameters, each in [0, 1]. Two identities are kept
// at least delta_shape apart in L-infinity distance over this vector.
struct ShapeParams {
  double height_scale = 0.5;
  double torso_width = 0.5;
  double limb_thickness = 0.5;
  double head_radius = 0.5;
  double shoulder_offset = 0.5;

  std::array<double, 5> as_array() const {
    return {height_scale, torso_width, limb_thickness, head_radius, shoulder_offset};
  }
  static ShapeParams from_array(const std::array<double, 5>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
  double linf_distance(const ShapeParams& o) const {
    const auto a = as_array(), b = o.as_array();
    double d = 0;
    for (int i = 0; i < 5; ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
  }
};

struct SpriteStyle {
  Rgb shirt, pants;
  bool stripes = false;
};

namespace sprite_detail {

struct Vec2 {
  double x, y;
};

inline double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace sprite_detail

// Renders one person sprite. Coordinates are normalized: y in [0, 1] top to
// bottom, x in [0, aspect] with aspect = W/H. Supersampled 3x then box
// filtered, so sub-pixel shape differences survive at desk resolutions.
inline Tensor<float> render_sprite(const ShapeParams& sp, const SpriteStyle& style, int pose_id,
                                   int n_poses, int view_id, int image_h, int image_w,
                                   double background_noise, Rng& noise_rng) {
  using sprite_detail::Vec2;
  using sprite_detail::dist_to_segment;

  const int ss = 3;
  const int H = image_h * ss, W = image_w * ss;
  const double aspect = static_cast<double>(image_w) / image_h;

  // physical ranges behind the normalized parameters
  const double height_scale = 0.70 + 0.28 * sp.height_scale;
  const double torso_w = 0.15 + 0.17 * sp.torso_width;
  const double limb_t = 0.030 + 0.036 * sp.limb_thickness;
  const double head_r = 0.048 + 0.044 * sp.head_radius;
  const double shoulder = (sp.shoulder_offset - 0.5) * 0.10;

  const bool mirror = (view_id & 1) != 0;
  const double view_scale = 1.0 - 0.05 * (view_id >> 1);

  const double phase = 2.0 * 3.14159265358979323846 * pose_id / std::max(1, n_poses);
  const double leg_swing = 0.40 * std::sin(phase);
  const double arm_swing = -0.45 * std::sin(phase);

  const double feet_y = 0.94;
  const double fig_h = 0.88 * height_scale * view_scale;
  const double hr = head_r * view_scale;
  const double top_y = feet_y - fig_h;
  const double cx = aspect / 2.0;

  const double head_cy = top_y + hr;
  const double shoulder_y = top_y + 2.0 * hr + 0.015;
  const double hip_y = shoulder_y + 0.40 * fig_h;
  const double sh_hw = (torso_w / 2.0 + shoulder) * view_scale;
  const double hip_hw = (torso_w / 2.0 - shoulder * 0.4) * view_scale;
  const double lt = limb_t * view_scale;

  const double leg_len = feet_y - hip_y;
  const double arm_len = 0.34 * fig_h;

  const Vec2 hipL{cx - hip_hw * 0.55, hip_y}, hipR{cx + hip_hw * 0.55, hip_y};
  const Vec2 footL{hipL.x + leg_len * std::sin(leg_swing), feet_y};
  const Vec2 footR{hipR.x + leg_len * std::sin(-leg_swing), feet_y};
  const Vec2 shL{cx - sh_hw, shoulder_y + 0.01}, shR{cx + sh_hw, shoulder_y + 0.01};
  const Vec2 handL{shL.x + arm_len * std::sin(arm_swing) - 0.01, shL.y + arm_len * std::cos(arm_swing)};
  const Vec2 handR{shR.x + arm_len * std::sin(-arm_swing) + 0.01, shR.y + arm_len * std::cos(arm_swing)};

  // Region luminances are kept distinct from the 0.82 background so the whole
  // silhouette survives grayscale conversion: skin ~0.63, shirt/pants from the
  // palette lumas (defaults 0.45 / 0.32).
  const Rgb skin{0.78f, 0.58f, 0.45f};

  Tensor<float> canvas({H, W, 3});
  for (int py = 0; py < H; ++py) {
    for (int px = 0; px < W; ++px) {
      double x = (px + 0.5) / H;  // note: divided by H so y and x share units
      const double y = (py + 0.5) / H;
      if (mirror) x = aspect - x;

      Rgb c{0, 0, 0};
      bool solid = false;

      // head
      {
        const double dx = x - cx, dy = y - head_cy;
        if (dx * dx + dy * dy <= hr * hr) {
          c = skin;
          solid = true;
        }
      }
      // torso: trapezoid between shoulder_y and hip_y
      if (!solid && y >= shoulder_y && y <= hip_y) {
        const double t = (y - shoulder_y) / std::max(1e-9, hip_y - shoulder_y);
        const double hw = sh_hw + (hip_hw - sh_hw) * t;
        if (std::abs(x - cx) <= hw) {
          c = style.shirt;
          if (style.stripes && std::fmod(y * 24.0, 2.0) < 1.0) {
            c.r *= 0.55f;
            c.g *= 0.55f;
            c.b *= 0.55f;
          }
          solid = true;
        }
      }
      // arms (sleeves in shirt color)
      if (!solid) {
        const Vec2 p{x, y};
        if (dist_to_segment(p, shL, handL) <= lt * 0.5 ||
            dist_to_segment(p, shR, handR) <= lt * 0.5) {
          c = style.shirt;
          solid = true;
        }
      }
      // legs
      if (!solid) {
        const Vec2 p{x, y};
        if (dist_to_segment(p, hipL, footL) <= lt * 0.6 ||
            dist_to_segment(p, hipR, footR) <= lt * 0.6) {
          c = style.pants;
          solid = true;
        }
      }
      if (solid) {
        canvas.at(py, px, 0) = c.r;
        canvas.at(py, px, 1) = c.g;
        canvas.at(py, px, 2) = c.b;
      } else {
        canvas.at(py, px, 0) = -1.0f;  // marker: background, filled below
      }
    }
  }

  // downsample + background noise (noise drawn at output resolution so the
  // sampler sees uncorrelated pixels)
  Tensor<float> out({image_h, image_w, 3});
  for (int oy = 0; oy < image_h; ++oy) {
    for (int ox = 0; ox < image_w; ++ox) {
      float acc[3] = {0, 0, 0};
      int bg = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const int py = oy * ss + sy, px = ox * ss + sx;
          if (canvas.at(py, px, 0) < 0) {
            ++bg;
          } else {
            for (int ch = 0; ch < 3; ++ch) acc[ch] += canvas.at(py, px, ch);
          }
        }
      const float bg_base = 0.82f;
      for (int ch = 0; ch < 3; ++ch) {
        const float noise =
            static_cast<float>(background_noise * (2.0 * noise_rng.uniform() - 1.0));
        const float bg_val = std::clamp(bg_base + noise, 0.0f, 1.0f);
        out.at(oy, ox, ch) = (acc[ch] + bg * bg_val) / (ss * ss);
      }
    }
  }
  return out;
}

}  // namespace caseforge
