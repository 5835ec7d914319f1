#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "caseforge/core/serialize.hpp"
#include "caseforge/nn/modules.hpp"

namespace caseforge {

// Architecture/profile description for the five networks. The desk profile is
// small enough to train on a CPU in minutes; the paper profile reproduces the
// published dimensions (256x128 inputs, 2048-d shape feature, conv feature
// discriminator, deeper image discriminator).
struct ModelConfig {
  std::string profile = "desk";
  int image_h = 64;
  int image_w = 32;
  int feature_dim = 128;  // pooled shape feature d
  int color_dim = 64;     // color feature d_c
  std::vector<int> enc_widths = {16, 32, 64, 128};  // stem + one per downsample
  bool feat_disc_conv = false;                      // conv stack vs MLP for D_F
  int feat_disc_hidden = 128;
  std::vector<int> img_disc_widths = {16, 32, 64};
  int num_classes = 0;  // id classifier head on the shape encoder; 0 disables
  double prob_eps = 1e-7;

  int downs() const { return static_cast<int>(enc_widths.size()) - 1; }
  int map_channels() const { return enc_widths.back(); }
  int map_h() const { return image_h >> downs(); }
  int map_w() const { return image_w >> downs(); }

  static ModelConfig desk() { return ModelConfig{}; }

  static ModelConfig paper() {
    ModelConfig c;
    c.profile = "paper";
    c.image_h = 256;
    c.image_w = 128;
    c.feature_dim = 2048;
    c.color_dim = 128;
    c.enc_widths = {64, 128, 256, 512};
    c.feat_disc_conv = true;  // five conv blocks on the pre-pooling map
    c.feat_disc_hidden = 256;
    c.img_disc_widths = {64, 128, 256, 512};
    return c;
  }

  void validate() const {
    require(profile == "desk" || profile == "paper", Errc::config_invalid,
            "model profile must be 'desk' or 'paper', got '" + profile + "'");
    require(enc_widths.size() >= 2, Errc::config_invalid,
            "enc_widths needs a stem width plus at least one downsample width");
    const int div = 1 << downs();
    require(image_h % div == 0 && image_w % div == 0, Errc::config_invalid,
            "image size " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                " must be divisible by 2^" + std::to_string(downs()));
    require(map_h() >= 1 && map_w() >= 1, Errc::config_invalid, "feature map collapsed to zero");
    require(feature_dim > 0 && color_dim > 0, Errc::config_invalid, "feature dims must be > 0");
    require(!img_disc_widths.empty(), Errc::config_invalid, "img_disc_widths must be non-empty");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"profile", c.profile},
                        {"image_h", c.image_h},
                        {"image_w", c.image_w},
                        {"feature_dim", c.feature_dim},
                        {"color_dim", c.color_dim},
                        {"enc_widths", c.enc_widths},
                        {"feat_disc_conv", c.feat_disc_conv},
                        {"feat_disc_hidden", c.feat_disc_hidden},
                        {"img_disc_widths", c.img_disc_widths},
                        {"num_classes", c.num_classes},
                        {"prob_eps", c.prob_eps}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.profile = j.at("profile").get<std::string>();
  c.image_h = j.at("image_h").get<int>();
  c.image_w = j.at("image_w").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.color_dim = j.at("color_dim").get<int>();
  c.enc_widths = j.at("enc_widths").get<std::vector<int>>();
  c.feat_disc_conv = j.at("feat_disc_conv").get<bool>();
  c.feat_disc_hidden = j.at("feat_disc_hidden").get<int>();
  c.img_disc_widths = j.at("img_disc_widths").get<std::vector<int>>();
  c.num_classes = j.at("num_classes").get<int>();
  c.prob_eps = j.at("prob_eps").get<double>();
  return c;
}

// (B, H, W, 3) in [0,1] -> (B, 3, H, W)
template <typename T>
Tensor<T> hwc_to_nchw(const Tensor<T>& x) {
  const auto& s = x.shape();
  require(s.size() == 4 && s[3] == 3, Errc::shape_mismatch,
          "expected (B, H, W, 3), got " + shape_str(s));
  Tensor<T> out({s[0], 3, s[1], s[2]});
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t h = 0; h < s[1]; ++h)
      for (int64_t w = 0; w < s[2]; ++w)
        for (int64_t c = 0; c < 3; ++c) out.at(n, c, h, w) = x[((n * s[1] + h) * s[2] + w) * 3 + c];
  return out;
}

template <typename T>
Tensor<T> nchw_to_hwc(const Tensor<T>& x) {
  const auto& s = x.shape();
  require(s.size() == 4 && s[1] == 3, Errc::shape_mismatch,
          "expected (B, 3, H, W), got " + shape_str(s));
  Tensor<T> out({s[0], s[2], s[3], 3});
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t h = 0; h < s[2]; ++h)
        for (int64_t w = 0; w < s[3]; ++w) out[((n * s[2] + h) * s[3] + w) * 3 + c] = x.at(n, c, h, w);
  return out;
}

// Shape feature of a batch: the pre-pooling spatial map feeds the generator,
// the pooled vector feeds re-ID, the triplet loss and (desk profile) D_F.
template <typename T>
struct ShapeFeat {
  Var<T> map;     // (B, C, h, w)
  Var<T> pooled;  // (B, d)
};

template <typename T>
struct ShapeEncoder {
  nn::ConvBlock<T> stem;
  std::vector<nn::ConvBlock<T>> down;
  std::vector<nn::ResBlock<T>> res;
  nn::Linear<T> proj;
  nn::Linear<T> classifier;  // only when num_classes > 0
  bool has_classifier = false;

  ShapeEncoder() = default;
  ShapeEncoder(const ModelConfig& cfg, Rng rng) {
    stem = nn::ConvBlock<T>(3, cfg.enc_widths[0], 1, rng);
    for (int i = 1; i < static_cast<int>(cfg.enc_widths.size()); ++i) {
      down.emplace_back(cfg.enc_widths[static_cast<size_t>(i - 1)],
                        cfg.enc_widths[static_cast<size_t>(i)], 2, rng);
      res.emplace_back(cfg.enc_widths[static_cast<size_t>(i)], rng);
    }
    proj = nn::Linear<T>(cfg.map_channels(), cfg.feature_dim, 1.0, rng);
    if (cfg.num_classes > 0) {
      classifier = nn::Linear<T>(cfg.feature_dim, cfg.num_classes, 1.0, rng);
      has_classifier = true;
    }
  }

  ShapeFeat<T> forward(const Var<T>& x_nchw) const {
    auto h = stem.forward(x_nchw);
    for (size_t i = 0; i < down.size(); ++i) h = res[i].forward(down[i].forward(h));
    ShapeFeat<T> out;
    out.map = h;
    out.pooled = proj.forward(ops::global_avg_pool(h));
    return out;
  }

  Var<T> logits(const Var<T>& pooled) const {
    require(has_classifier, Errc::invalid_argument, "shape encoder has no id classifier head");
    return classifier.forward(pooled);
  }

  void collect(nn::ParamList<T>& out, const std::string& p) const {
    stem.collect(out, p + ".stem");
    for (size_t i = 0; i < down.size(); ++i) {
      down[i].collect(out, p + ".down" + std::to_string(i));
      res[i].collect(out, p + ".res" + std::to_string(i));
    }
    proj.collect(out, p + ".proj");
    if (has_classifier) classifier.collect(out, p + ".cls");
  }
};

template <typename T>
struct ColorEncoder {
  nn::ConvBlock<T> stem;
  std::vector<nn::ConvBlock<T>> down;
  std::vector<nn::ResBlock<T>> res;
  nn::Linear<T> proj;

  ColorEncoder() = default;
  ColorEncoder(const ModelConfig& cfg, Rng rng) {
    stem = nn::ConvBlock<T>(3, cfg.enc_widths[0], 1, rng);
    for (int i = 1; i < static_cast<int>(cfg.enc_widths.size()); ++i) {
      down.emplace_back(cfg.enc_widths[static_cast<size_t>(i - 1)],
                        cfg.enc_widths[static_cast<size_t>(i)], 2, rng);
      res.emplace_back(cfg.enc_widths[static_cast<size_t>(i)], rng);
    }
    proj = nn::Linear<T>(cfg.map_channels(), cfg.color_dim, 1.0, rng);
  }

  Var<T> forward(const Var<T>& x_nchw) const {
    auto h = stem.forward(x_nchw);
    for (size_t i = 0; i < down.size(); ++i) h = res[i].forward(down[i].forward(h));
    return proj.forward(ops::global_avg_pool(h));
  }

  void collect(nn::ParamList<T>& out, const std::string& p) const {
    stem.collect(out, p + ".stem");
    for (size_t i = 0; i < down.size(); ++i) {
      down[i].collect(out, p + ".down" + std::to_string(i));
      res[i].collect(out, p + ".res" + std::to_string(i));
    }
    proj.collect(out, p + ".proj");
  }
};

// D_F: decides whether a shape feature came from an RGB or a grayscale input.
// Desk profile: 3-layer MLP on the pooled vector. Paper profile: five conv
// blocks over the pre-pooling map.
template <typename T>
struct FeatureDiscriminator {
  bool conv_variant = false;
  nn::Linear<T> l1, l2, l3;
  std::vector<nn::ConvBlock<T>> blocks;
  nn::Linear<T> head;
  T eps = T(1e-7);

  FeatureDiscriminator() = default;
  FeatureDiscriminator(const ModelConfig& cfg, Rng rng) : conv_variant(cfg.feat_disc_conv) {
    eps = static_cast<T>(cfg.prob_eps);
    if (conv_variant) {
      int c_in = cfg.map_channels();
      int width = cfg.feat_disc_hidden;
      for (int i = 0; i < 5; ++i) {
        const int stride = i + 1 < 5 ? 2 : 1;
        blocks.emplace_back(c_in, width, stride, rng);
        c_in = width;
        width = std::max(16, width / 2);
      }
      head = nn::Linear<T>(c_in, 1, 1.0, rng);
    } else {
      l1 = nn::Linear<T>(cfg.feature_dim, cfg.feat_disc_hidden, nn::kLreluGain, rng);
      l2 = nn::Linear<T>(cfg.feat_disc_hidden, cfg.feat_disc_hidden, nn::kLreluGain, rng);
      l3 = nn::Linear<T>(cfg.feat_disc_hidden, 1, 1.0, rng);
    }
  }

  // probability that the feature came from the RGB stream, in [eps, 1-eps]
  Var<T> forward(const ShapeFeat<T>& f) const {
    if (conv_variant) {
      auto h = f.map;
      for (const auto& b : blocks) h = b.forward(h);
      auto logit = head.forward(ops::global_avg_pool(h));
      return ops::sigmoid_clamped(ops::reshape(logit, {logit->value.dim(0)}), eps);
    }
    auto h = ops::leaky_relu(l1.forward(f.pooled), T(nn::kLreluSlope));
    h = ops::leaky_relu(l2.forward(h), T(nn::kLreluSlope));
    auto logit = l3.forward(h);
    return ops::sigmoid_clamped(ops::reshape(logit, {logit->value.dim(0)}), eps);
  }

  void collect(nn::ParamList<T>& out, const std::string& p) const {
    if (conv_variant) {
      for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(out, p + ".block" + std::to_string(i));
      head.collect(out, p + ".head");
    } else {
      l1.collect(out, p + ".l1");
      l2.collect(out, p + ".l2");
      l3.collect(out, p + ".l3");
    }
  }
};

// G: takes the gray shape map concatenated with the broadcast color feature
// and decodes an RGB image. Six conv-residual blocks interleaved with nearest
// neighbor upsampling, bounded output activation.
template <typename T>
struct Generator {
  nn::ConvBlock<T> conv_in;
  std::vector<nn::ResBlock<T>> res;       // two per scale
  std::vector<nn::ConvBlock<T>> up_conv;  // after each upsample
  nn::Conv2d<T> to_rgb;
  int n_up = 0;

  Generator() = default;
  Generator(const ModelConfig& cfg, Rng rng) {
    n_up = cfg.downs();
    int c = cfg.map_channels();
    conv_in = nn::ConvBlock<T>(c + cfg.color_dim, c, 1, rng);
    // res pairs at full, half, quarter width; up_convs halve the width
    int cur = c;
    for (int i = 0; i < 3; ++i) {
      res.emplace_back(cur, rng);
      res.emplace_back(cur, rng);
      if (i < 2) {
        const int next = std::max(8, cur / 2);
        up_conv.emplace_back(cur, next, 1, rng);
        cur = next;
      }
    }
    // any remaining upsamples keep the final width
    for (int i = 2; i < n_up; ++i) up_conv.emplace_back(cur, cur, 1, rng);
    to_rgb = nn::Conv2d<T>(cur, 3, 3, 1, 1, 1.0, rng);
  }

  Var<T> forward(const Var<T>& shape_map, const Var<T>& color_vec) const {
    const auto& sm = shape_map->value.shape();
    auto fc = ops::broadcast_to_map(color_vec, sm[2], sm[3]);
    auto h = conv_in.forward(ops::concat_channels(shape_map, fc));
    size_t ri = 0, ui = 0;
    for (int i = 0; i < 3; ++i) {
      h = res[ri++].forward(h);
      h = res[ri++].forward(h);
      if (i < 2 && static_cast<int>(ui) < n_up) h = up_conv[ui++].forward(ops::upsample_nearest2(h));
    }
    while (static_cast<int>(ui) < n_up) h = up_conv[ui++].forward(ops::upsample_nearest2(h));
    return ops::tanh01(to_rgb.forward(h));
  }

  void collect(nn::ParamList<T>& out, const std::string& p) const {
    conv_in.collect(out, p + ".conv_in");
    for (size_t i = 0; i < res.size(); ++i) res[i].collect(out, p + ".res" + std::to_string(i));
    for (size_t i = 0; i < up_conv.size(); ++i) up_conv[i].collect(out, p + ".up" + std::to_string(i));
    to_rgb.collect(out, p + ".to_rgb");
  }
};

// D_I: real-vs-synthesized image discriminator.
template <typename T>
struct ImageDiscriminator {
  nn::Conv2d<T> first;
  std::vector<nn::ConvBlock<T>> blocks;
  nn::Linear<T> head;
  T eps = T(1e-7);

  ImageDiscriminator() = default;
  ImageDiscriminator(const ModelConfig& cfg, Rng rng) {
    eps = static_cast<T>(cfg.prob_eps);
    const auto& w = cfg.img_disc_widths;
    first = nn::Conv2d<T>(3, w[0], 3, 2, 1, nn::kLreluGain, rng);
    for (size_t i = 1; i < w.size(); ++i)
      blocks.emplace_back(w[i - 1], w[i], 2, rng);
    head = nn::Linear<T>(w.back(), 1, 1.0, rng);
  }

  Var<T> forward(const Var<T>& x_nchw) const {
    auto h = ops::leaky_relu(first.forward(x_nchw), T(nn::kLreluSlope));
    for (const auto& b : blocks) h = b.forward(h);
    auto logit = head.forward(ops::global_avg_pool(h));
    return ops::sigmoid_clamped(ops::reshape(logit, {logit->value.dim(0)}), eps);
  }

  void collect(nn::ParamList<T>& out, const std::string& p) const {
    first.collect(out, p + ".first");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, p + ".block" + std::to_string(i));
    head.collect(out, p + ".head");
  }
};

// The five networks plus the wiring used at inference time. Forward passes
// are pure over parameters and safe to call concurrently; training updates
// need a single writer.
template <typename T>
struct ModelBundle {
  ModelConfig cfg;
  ShapeEncoder<T> shape_encoder;
  ColorEncoder<T> color_encoder;
  FeatureDiscriminator<T> feat_disc;
  Generator<T> generator;
  ImageDiscriminator<T> image_disc;

  ModelBundle() = default;
  ModelBundle(ModelConfig config, uint64_t seed) : cfg(std::move(config)) {
    cfg.validate();
    Rng root(seed);
    shape_encoder = ShapeEncoder<T>(cfg, root.fork(1));
    color_encoder = ColorEncoder<T>(cfg, root.fork(2));
    feat_disc = FeatureDiscriminator<T>(cfg, root.fork(3));
    generator = Generator<T>(cfg, root.fork(4));
    image_disc = ImageDiscriminator<T>(cfg, root.fork(5));
  }

  nn::ParamList<T> params_shape_encoder() const {
    nn::ParamList<T> p;
    shape_encoder.collect(p, "es");
    return p;
  }
  nn::ParamList<T> params_color_encoder() const {
    nn::ParamList<T> p;
    color_encoder.collect(p, "ec");
    return p;
  }
  nn::ParamList<T> params_feat_disc() const {
    nn::ParamList<T> p;
    feat_disc.collect(p, "df");
    return p;
  }
  nn::ParamList<T> params_generator() const {
    nn::ParamList<T> p;
    generator.collect(p, "g");
    return p;
  }
  nn::ParamList<T> params_image_disc() const {
    nn::ParamList<T> p;
    image_disc.collect(p, "di");
    return p;
  }
  nn::ParamList<T> all_params() const {
    nn::ParamList<T> p;
    shape_encoder.collect(p, "es");
    color_encoder.collect(p, "ec");
    feat_disc.collect(p, "df");
    generator.collect(p, "g");
    image_disc.collect(p, "di");
    return p;
  }

  void check_image_batch(const Tensor<T>& images) const {
    const Shape expect{images.ndim() ? images.dim(0) : 0, cfg.image_h, cfg.image_w, 3};
    require(images.ndim() == 4 && images.dim(1) == cfg.image_h && images.dim(2) == cfg.image_w &&
                images.dim(3) == 3,
            Errc::shape_mismatch,
            "image batch: expected " + shape_str(expect) + ", got " + shape_str(images.shape()));
  }

  // ---- inference-mode operations (no gradients) ----

  struct ShapeEncoding {
    Tensor<T> features;  // (B, d)
    Tensor<T> maps;      // (B, C, h, w)
  };

  ShapeEncoding shape_encode(const Tensor<T>& images_hwc) const {
    check_image_batch(images_hwc);
    auto x = constant(hwc_to_nchw(images_hwc));
    auto f = shape_encoder.forward(x);
    return {f.pooled->value, f.map->value};
  }

  Tensor<T> color_encode(const Tensor<T>& images_hwc) const {
    check_image_batch(images_hwc);
    return color_encoder.forward(constant(hwc_to_nchw(images_hwc)))->value;
  }

  Tensor<T> discriminate_features(const Tensor<T>& pooled) const {
    require(pooled.ndim() == 2 && pooled.dim(1) == cfg.feature_dim, Errc::shape_mismatch,
            "discriminate_features: expected (B, " + std::to_string(cfg.feature_dim) + "), got " +
                shape_str(pooled.shape()));
    require(!cfg.feat_disc_conv, Errc::invalid_argument,
            "conv-variant D_F consumes feature maps; use discriminate_feature_maps");
    ShapeFeat<T> f;
    f.pooled = constant(Tensor<T>(pooled));
    return feat_disc.forward(f)->value;
  }

  Tensor<T> discriminate_feature_maps(const Tensor<T>& maps) const {
    ShapeFeat<T> f;
    f.map = constant(Tensor<T>(maps));
    return feat_disc.forward(f)->value;
  }

  Tensor<T> generate_image(const Tensor<T>& shape_map, const Tensor<T>& color_vec) const {
    require(shape_map.ndim() == 4 && shape_map.dim(1) == cfg.map_channels() &&
                shape_map.dim(2) == cfg.map_h() && shape_map.dim(3) == cfg.map_w(),
            Errc::shape_mismatch,
            "generate_image: shape map expected (B, " + std::to_string(cfg.map_channels()) + ", " +
                std::to_string(cfg.map_h()) + ", " + std::to_string(cfg.map_w()) + "), got " +
                shape_str(shape_map.shape()));
    require(color_vec.ndim() == 2 && color_vec.dim(1) == cfg.color_dim &&
                color_vec.dim(0) == shape_map.dim(0),
            Errc::shape_mismatch,
            "generate_image: color feature expected (B, " + std::to_string(cfg.color_dim) +
                "), got " + shape_str(color_vec.shape()));
    auto out = generator.forward(constant(Tensor<T>(shape_map)), constant(Tensor<T>(color_vec)));
    return nchw_to_hwc(out->value);
  }

  Tensor<T> discriminate_image(const Tensor<T>& images_hwc) const {
    check_image_batch(images_hwc);
    return image_disc.forward(constant(hwc_to_nchw(images_hwc)))->value;
  }

  // ---- checkpointing ----

  void save_params(const std::filesystem::path& dir) const {
    const std::pair<const char*, nn::ParamList<T>> groups[] = {
        {"params_es.bin", params_shape_encoder()},
        {"params_ec.bin", params_color_encoder()},
        {"params_df.bin", params_feat_disc()},
        {"params_g.bin", params_generator()},
        {"params_di.bin", params_image_disc()},
    };
    for (const auto& [file, params] : groups) {
      TensorArchiveWriter w;
      for (const auto& p : params) w.add(p.name, p.var->value);
      w.save(dir / file);
    }
  }

  void load_params(const std::filesystem::path& dir) {
    const std::pair<const char*, nn::ParamList<T>> groups[] = {
        {"params_es.bin", params_shape_encoder()},
        {"params_ec.bin", params_color_encoder()},
        {"params_df.bin", params_feat_disc()},
        {"params_g.bin", params_generator()},
        {"params_di.bin", params_image_disc()},
    };
    for (const auto& [file, params] : groups) {
      TensorArchiveReader r(dir / file);
      for (const auto& p : params) {
        auto t = r.get<T>(p.name);
        require(t.shape() == p.var->value.shape(), Errc::bad_checkpoint,
                "checkpoint tensor " + p.name + " has shape " + shape_str(t.shape()) +
                    ", expected " + shape_str(p.var->value.shape()));
        p.var->value = std::move(t);
      }
    }
  }
};

}  // namespace caseforge
