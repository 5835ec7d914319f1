#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "caseforge/data/dataset.hpp"
#include "caseforge/models/bundle.hpp"
#include "caseforge/train/trainer.hpp"

namespace caseforge {

namespace config_detail {

inline int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (lower(a[i - 1]) == lower(b[j - 1]) ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Rejects keys outside `allowed`, suggesting the closest documented key.
inline void check_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                       const std::string& section) {
  require(obj.is_object(), Errc::config_invalid, "config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
    std::string best;
    int best_d = 1 << 20;
    for (const auto& cand : allowed) {
      const int d = levenshtein(key, cand);
      if (d < best_d) {
        best_d = d;
        best = cand;
      }
    }
    std::string msg = "unknown config key '" + (section.empty() ? key : section + "." + key) + "'";
    if (best_d <= 3) msg += "; did you mean '" + best + "'?";
    throw Error(Errc::config_invalid, msg);
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace config_detail

struct EvalSettings {
  std::vector<std::string> protocols = {"rr", "gr", "rg", "gg"};
  std::vector<std::string> clothing_filters = {"any"};
  bool same_view_exclusion = true;
  int cmc_k = 10;
  bool l2_normalize = false;

  void validate() const {
    require(!protocols.empty(), Errc::config_invalid, "eval.protocols must be non-empty");
    for (const auto& p : protocols) Protocol::from_code(p);
    for (const auto& f : clothing_filters) clothing_filter_from_name(f);
    require(cmc_k >= 1, Errc::config_invalid, "eval.cmc_k must be >= 1");
  }
};

// Whole-experiment configuration: dataset + model profile + training +
// evaluation protocols + ablation switches. The JSON schema is strict; any
// key outside the documented set is rejected.
struct ExperimentConfig {
  uint64_t seed = 1;
  std::string profile = "desk";
  GeneratorConfig data;
  std::optional<std::string> data_dir;  // reuse an existing generated dataset
  // model overrides on top of the profile defaults (image size comes from data)
  std::optional<int> feature_dim, color_dim, feat_disc_hidden;
  std::optional<std::vector<int>> enc_widths, img_disc_widths;
  std::optional<bool> feat_disc_conv;
  TrainConfig train;
  EvalSettings eval;
  LossSwitches ablation;  // parsed from disable_* keys

  ModelConfig model_config() const {
    ModelConfig mc = profile == "paper" ? ModelConfig::paper() : ModelConfig::desk();
    mc.image_h = data.image_h;
    mc.image_w = data.image_w;
    if (feature_dim) mc.feature_dim = *feature_dim;
    if (color_dim) mc.color_dim = *color_dim;
    if (feat_disc_hidden) mc.feat_disc_hidden = *feat_disc_hidden;
    if (enc_widths) mc.enc_widths = *enc_widths;
    if (img_disc_widths) mc.img_disc_widths = *img_disc_widths;
    if (feat_disc_conv) mc.feat_disc_conv = *feat_disc_conv;
    return mc;
  }

  TrainConfig train_config(bool baseline) const {
    TrainConfig tc = train;
    tc.seed = seed;
    tc.losses = ablation;
    tc.baseline = baseline;
    return tc;
  }

  void validate() const {
    require(profile == "desk" || profile == "paper", Errc::config_invalid,
            "profile must be 'desk' or 'paper'");
    validate_generator_config(data);
    train.validate();
    eval.validate();
    model_config().validate();
  }
};

inline GeneratorConfig generator_config_from_json_strict(const nlohmann::json& j) {
  config_detail::check_keys(j, {"ids_train", "ids_test", "clothing_variants_test", "poses",
                                "views", "image_h", "image_w", "delta_shape", "palette_size",
                                "shirt_luma", "pants_luma", "use_stripes", "background_noise",
                                "dir"},
                            "data");
  GeneratorConfig c;
  using config_detail::maybe;
  maybe(j, "ids_train", c.ids_train);
  maybe(j, "ids_test", c.ids_test);
  maybe(j, "clothing_variants_test", c.clothing_variants_test);
  maybe(j, "poses", c.poses);
  maybe(j, "views", c.views);
  maybe(j, "image_h", c.image_h);
  maybe(j, "image_w", c.image_w);
  maybe(j, "delta_shape", c.delta_shape);
  maybe(j, "palette_size", c.palette_size);
  maybe(j, "shirt_luma", c.shirt_luma);
  maybe(j, "pants_luma", c.pants_luma);
  maybe(j, "use_stripes", c.use_stripes);
  maybe(j, "background_noise", c.background_noise);
  return c;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using config_detail::check_keys;
  using config_detail::maybe;
  check_keys(j, {"version", "seed", "profile", "data", "model", "train", "eval", "ablation"}, "");
  if (j.contains("version"))
    require(j.at("version").get<std::string>() == "1", Errc::config_invalid,
            "unsupported config version");
  ExperimentConfig c;
  maybe(j, "seed", c.seed);
  maybe(j, "profile", c.profile);

  if (j.contains("data")) {
    c.data = generator_config_from_json_strict(j.at("data"));
    if (j.at("data").contains("dir")) c.data_dir = j.at("data").at("dir").get<std::string>();
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"feature_dim", "color_dim", "enc_widths", "feat_disc_hidden",
                   "img_disc_widths", "feat_disc_conv"},
               "model");
    if (m.contains("feature_dim")) c.feature_dim = m.at("feature_dim").get<int>();
    if (m.contains("color_dim")) c.color_dim = m.at("color_dim").get<int>();
    if (m.contains("feat_disc_hidden")) c.feat_disc_hidden = m.at("feat_disc_hidden").get<int>();
    if (m.contains("enc_widths")) c.enc_widths = m.at("enc_widths").get<std::vector<int>>();
    if (m.contains("img_disc_widths"))
      c.img_disc_widths = m.at("img_disc_widths").get<std::vector<int>>();
    if (m.contains("feat_disc_conv")) c.feat_disc_conv = m.at("feat_disc_conv").get<bool>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"total_iters", "gen_iters_per_cycle", "disc_iters_per_cycle", "margin",
                   "lambda_tri", "lambda_i", "lr_encoder", "lr_gan", "beta1", "beta2", "adam_eps",
                   "grad_clip", "checkpoint_every", "batch_p", "batch_k",
                   "enc_adv_both_streams"},
               "train");
    maybe(t, "total_iters", c.train.total_iters);
    maybe(t, "gen_iters_per_cycle", c.train.gen_iters_per_cycle);
    maybe(t, "disc_iters_per_cycle", c.train.disc_iters_per_cycle);
    maybe(t, "margin", c.train.hyper.margin);
    maybe(t, "lambda_tri", c.train.hyper.lambda_tri);
    maybe(t, "lambda_i", c.train.hyper.lambda_i);
    maybe(t, "lr_encoder", c.train.lr_encoder);
    maybe(t, "lr_gan", c.train.lr_gan);
    maybe(t, "beta1", c.train.beta1);
    maybe(t, "beta2", c.train.beta2);
    maybe(t, "adam_eps", c.train.adam_eps);
    maybe(t, "grad_clip", c.train.grad_clip);
    maybe(t, "checkpoint_every", c.train.checkpoint_every);
    maybe(t, "batch_p", c.train.batch_p);
    maybe(t, "batch_k", c.train.batch_k);
    maybe(t, "enc_adv_both_streams", c.train.enc_adv_both_streams);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"protocols", "clothing_filters", "same_view_exclusion", "cmc_k", "l2_normalize"},
               "eval");
    maybe(e, "protocols", c.eval.protocols);
    maybe(e, "clothing_filters", c.eval.clothing_filters);
    maybe(e, "same_view_exclusion", c.eval.same_view_exclusion);
    maybe(e, "cmc_k", c.eval.cmc_k);
    maybe(e, "l2_normalize", c.eval.l2_normalize);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    check_keys(a, {"disable_l_id", "disable_l_tri", "disable_l_adv_DF", "disable_l_rec",
                   "disable_l_adv_DI"},
               "ablation");
    bool v = false;
    if (a.contains("disable_l_id")) { v = a.at("disable_l_id").get<bool>(); c.ablation.id = !v; }
    if (a.contains("disable_l_tri")) { v = a.at("disable_l_tri").get<bool>(); c.ablation.tri = !v; }
    if (a.contains("disable_l_adv_DF")) { v = a.at("disable_l_adv_DF").get<bool>(); c.ablation.adv_df = !v; }
    if (a.contains("disable_l_rec")) { v = a.at("disable_l_rec").get<bool>(); c.ablation.rec = !v; }
    if (a.contains("disable_l_adv_DI")) { v = a.at("disable_l_adv_DI").get<bool>(); c.ablation.adv_di = !v; }
  }
  c.validate();
  return c;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json data = generator_config_to_json(c.data);
  if (c.data_dir) data["dir"] = *c.data_dir;
  const ModelConfig mc = c.model_config();
  nlohmann::json j{
      {"version", "1"},
      {"seed", c.seed},
      {"profile", c.profile},
      {"data", data},
      {"model",
       {{"feature_dim", mc.feature_dim},
        {"color_dim", mc.color_dim},
        {"enc_widths", mc.enc_widths},
        {"feat_disc_hidden", mc.feat_disc_hidden},
        {"img_disc_widths", mc.img_disc_widths},
        {"feat_disc_conv", mc.feat_disc_conv}}},
      {"train",
       {{"total_iters", c.train.total_iters},
        {"gen_iters_per_cycle", c.train.gen_iters_per_cycle},
        {"disc_iters_per_cycle", c.train.disc_iters_per_cycle},
        {"margin", c.train.hyper.margin},
        {"lambda_tri", c.train.hyper.lambda_tri},
        {"lambda_i", c.train.hyper.lambda_i},
        {"lr_encoder", c.train.lr_encoder},
        {"lr_gan", c.train.lr_gan},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_eps", c.train.adam_eps},
        {"grad_clip", c.train.grad_clip},
        {"checkpoint_every", c.train.checkpoint_every},
        {"batch_p", c.train.batch_p},
        {"batch_k", c.train.batch_k},
        {"enc_adv_both_streams", c.train.enc_adv_both_streams}}},
      {"eval",
       {{"protocols", c.eval.protocols},
        {"clothing_filters", c.eval.clothing_filters},
        {"same_view_exclusion", c.eval.same_view_exclusion},
        {"cmc_k", c.eval.cmc_k},
        {"l2_normalize", c.eval.l2_normalize}}},
      {"ablation",
       {{"disable_l_id", !c.ablation.id},
        {"disable_l_tri", !c.ablation.tri},
        {"disable_l_adv_DF", !c.ablation.adv_df},
        {"disable_l_rec", !c.ablation.rec},
        {"disable_l_adv_DI", !c.ablation.adv_di}}}};
  return j;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_invalid, "cannot parse " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

}  // namespace caseforge
