#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "caseforge/data/sampler.hpp"
#include "caseforge/losses/losses.hpp"
#include "caseforge/models/bundle.hpp"
#include "caseforge/nn/optimizer.hpp"

namespace caseforge {

struct LossSwitches {
  bool id = true;
  bool tri = true;
  bool adv_df = true;
  bool rec = true;
  bool adv_di = true;
};

struct TrainConfig {
  int64_t total_iters = 1000;
  int gen_iters_per_cycle = 1;
  int disc_iters_per_cycle = 1;
  HyperParams hyper;
  double lr_encoder = 1e-4;
  double lr_gan = 2e-4;  // generator and both discriminators
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;  // <= 0 disables
  uint64_t seed = 1;
  int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  int batch_p = 8;
  int batch_k = 4;
  LossSwitches losses;
  // Encoder-side adversarial update: when true the encoder also pushes RGB
  // features toward the gray side of D_F (symmetric confusion); when false
  // only gray features are pushed toward the RGB side. The symmetric form is
  // what actually strips color from the RGB stream at this scale.
  bool enc_adv_both_streams = true;
  // Comparator mode: shape encoder trained with id+triplet on the RGB stream
  // only; no grayscale stream, no adversary, no generator.
  bool baseline = false;

  void validate() const {
    require(total_iters >= 0, Errc::config_invalid, "total_iters must be >= 0");
    require(gen_iters_per_cycle >= 1 && disc_iters_per_cycle >= 1, Errc::config_invalid,
            "per-cycle iteration counts must be >= 1");
    require(lr_encoder >= 0 && lr_gan >= 0, Errc::config_invalid, "step sizes must be >= 0");
    require(batch_p >= 2 && batch_k >= 2, Errc::config_invalid, "need batch_p >= 2 and batch_k >= 2");
    hyper.validate();
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"total_iters", c.total_iters},
                        {"gen_iters_per_cycle", c.gen_iters_per_cycle},
                        {"disc_iters_per_cycle", c.disc_iters_per_cycle},
                        {"margin", c.hyper.margin},
                        {"lambda_tri", c.hyper.lambda_tri},
                        {"lambda_i", c.hyper.lambda_i},
                        {"lr_encoder", c.lr_encoder},
                        {"lr_gan", c.lr_gan},
                        {"beta1", c.beta1},
                        {"beta2", c.beta2},
                        {"adam_eps", c.adam_eps},
                        {"grad_clip", c.grad_clip},
                        {"seed", c.seed},
                        {"checkpoint_every", c.checkpoint_every},
                        {"batch_p", c.batch_p},
                        {"batch_k", c.batch_k},
                        {"disable_l_id", !c.losses.id},
                        {"disable_l_tri", !c.losses.tri},
                        {"disable_l_adv_DF", !c.losses.adv_df},
                        {"disable_l_rec", !c.losses.rec},
                        {"disable_l_adv_DI", !c.losses.adv_di},
                        {"enc_adv_both_streams", c.enc_adv_both_streams},
                        {"baseline", c.baseline}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.total_iters = j.at("total_iters").get<int64_t>();
  c.gen_iters_per_cycle = j.at("gen_iters_per_cycle").get<int>();
  c.disc_iters_per_cycle = j.at("disc_iters_per_cycle").get<int>();
  c.hyper.margin = j.at("margin").get<double>();
  c.hyper.lambda_tri = j.at("lambda_tri").get<double>();
  c.hyper.lambda_i = j.at("lambda_i").get<double>();
  c.lr_encoder = j.at("lr_encoder").get<double>();
  c.lr_gan = j.at("lr_gan").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  c.batch_p = j.at("batch_p").get<int>();
  c.batch_k = j.at("batch_k").get<int>();
  c.losses.id = !j.at("disable_l_id").get<bool>();
  c.losses.tri = !j.at("disable_l_tri").get<bool>();
  c.losses.adv_df = !j.at("disable_l_adv_DF").get<bool>();
  c.losses.rec = !j.at("disable_l_rec").get<bool>();
  c.losses.adv_di = !j.at("disable_l_adv_DI").get<bool>();
  c.enc_adv_both_streams = j.at("enc_adv_both_streams").get<bool>();
  c.baseline = j.at("baseline").get<bool>();
  return c;
}

// Resumable training state: model, one optimizer per parameter group, the
// sampler RNG stream and cumulative loss averages.
template <typename T>
struct TrainState {
  int64_t step = 0;
  ModelBundle<T> model;
  nn::Adam<T> opt_es, opt_ec, opt_df, opt_g, opt_di;
  Rng sampler_rng;
  LossValues loss_sums;  // cumulative, divided by step for running averages

  TrainState() = default;
  TrainState(const ModelConfig& mc, const TrainConfig& tc)
      : model(mc, Rng(tc.seed).fork(0xadd).next_u64()), sampler_rng(Rng(tc.seed).fork(0xbadc).next_u64()) {
    const nn::AdamConfig enc{tc.lr_encoder, tc.beta1, tc.beta2, tc.adam_eps, tc.grad_clip};
    const nn::AdamConfig gan{tc.lr_gan, tc.beta1, tc.beta2, tc.adam_eps, tc.grad_clip};
    opt_es = nn::Adam<T>(model.params_shape_encoder(), enc);
    opt_ec = nn::Adam<T>(model.params_color_encoder(), enc);
    opt_df = nn::Adam<T>(model.params_feat_disc(), gan);
    opt_g = nn::Adam<T>(model.params_generator(), gan);
    opt_di = nn::Adam<T>(model.params_image_disc(), gan);
  }

  LossValues running_average() const {
    if (step == 0) return {};
    LossValues r = loss_sums;
    const double inv = 1.0 / static_cast<double>(step);
    r.l_id *= inv;
    r.l_tri *= inv;
    r.l_adv_df *= inv;
    r.l_rec *= inv;
    r.l_adv_di *= inv;
    return r;
  }
};

namespace train_detail {

template <typename T>
void zero_all(TrainState<T>& s) {
  for (auto& p : s.model.all_params()) p.var->zero_grad();
}

template <typename T>
Var<T> image_const(const Tensor<float>& hwc) {
  return constant(hwc_to_nchw(hwc.template cast<T>()));
}

inline void check_finite(double v, const char* name, int64_t step) {
  require(std::isfinite(v), Errc::non_finite_loss,
          std::string("loss ") + name + " diverged (value " + std::to_string(v) + ") at step " +
              std::to_string(step));
}

}  // namespace train_detail

// One iteration of the alternating schedule: (1) re-ID update of the shape
// encoder, (2) adversarial alignment + pose-guided recovery updates of
// encoders and generator, (3) discriminator updates. The observer, when set,
// runs after each phase (1..3) for snapshot tests.
template <typename T>
LossValues train_step(TrainState<T>& state, const TrainingBatch& batch, const TrainConfig& cfg,
                      const std::function<void(int)>& phase_observer = nullptr) {
  using namespace train_detail;
  auto& m = state.model;
  const T margin = static_cast<T>(cfg.hyper.margin);
  LossValues out;

  auto x_rgb = [&] { return image_const<T>(batch.x_rgb); };
  auto x_gray = [&] { return image_const<T>(batch.x_gray); };
  auto x_prime = [&] { return image_const<T>(batch.x_rgb_prime); };

  // ---- phase 1: re-ID losses on the shape encoder ----
  if (cfg.losses.id || cfg.losses.tri) {
    zero_all(state);
    auto f_rgb = m.shape_encoder.forward(x_rgb());
    ShapeFeat<T> f_gray;
    if (!cfg.baseline) f_gray = m.shape_encoder.forward(x_gray());

    Var<T> total;
    if (cfg.losses.id) {
      Var<T> l_id;
      if (cfg.baseline) {
        l_id = ops::softmax_nll(m.shape_encoder.logits(f_rgb.pooled), batch.labels);
      } else {
        l_id = losses::identity_graph(m.shape_encoder.logits(f_rgb.pooled),
                                      m.shape_encoder.logits(f_gray.pooled), batch.labels);
      }
      out.l_id = static_cast<double>(l_id->value[0]);
      total = l_id;
    }
    if (cfg.losses.tri) {
      Var<T> l_tri;
      if (cfg.baseline) {
        l_tri = losses::triplet_stream_graph(f_rgb.pooled, batch.pos_idx, batch.neg_idx, margin);
      } else {
        l_tri = losses::triplet_graph(f_rgb.pooled, f_gray.pooled, batch.pos_idx, batch.neg_idx,
                                      margin);
      }
      out.l_tri = static_cast<double>(l_tri->value[0]);
      auto weighted = ops::scale(l_tri, static_cast<T>(cfg.hyper.lambda_tri));
      total = total ? ops::add(total, weighted) : weighted;
    }
    check_finite(out.l_id, "l_id", state.step);
    check_finite(out.l_tri, "l_tri", state.step);
    backward(total);
    state.opt_es.step();
    if (phase_observer) phase_observer(1);
  } else if (phase_observer) {
    phase_observer(1);
  }

  // ---- phase 2: encoder alignment + pose-guided image recovery ----
  if (!cfg.baseline) {
    for (int it = 0; it < cfg.gen_iters_per_cycle; ++it) {
      if (cfg.losses.adv_df) {
        // label-flipped surrogates: gray features toward the RGB side and,
        // in symmetric mode, RGB features toward the gray side
        zero_all(state);
        auto f_gray = m.shape_encoder.forward(x_gray());
        auto p = m.feat_disc.forward(f_gray);
        auto l = losses::fool_discriminator_loss_graph(p);
        if (cfg.enc_adv_both_streams) {
          auto f_rgb = m.shape_encoder.forward(x_rgb());
          auto p_rgb = m.feat_disc.forward(f_rgb);
          auto flip = ops::scale(
              ops::mean_all(ops::log_elem(ops::affine(p_rgb, T(-1), T(1)))), T(-1));
          l = ops::add(l, flip);
        }
        check_finite(static_cast<double>(l->value[0]), "l_adv_DF(encoder)", state.step);
        backward(l);
        state.opt_es.step();
      }
      if (cfg.losses.rec || cfg.losses.adv_di) {
        zero_all(state);
        auto f_gray = m.shape_encoder.forward(x_gray());
        auto f_c = m.color_encoder.forward(x_prime());
        auto x_hat = m.generator.forward(f_gray.map, f_c);
        Var<T> total;
        if (cfg.losses.rec) {
          auto l_rec = losses::reconstruction_graph(x_hat, x_rgb());
          out.l_rec = static_cast<double>(l_rec->value[0]);
          total = l_rec;
        }
        if (cfg.losses.adv_di) {
          auto l_gen = losses::fool_discriminator_loss_graph(m.image_disc.forward(x_hat));
          check_finite(static_cast<double>(l_gen->value[0]), "l_adv_DI(generator)", state.step);
          auto weighted = ops::scale(l_gen, static_cast<T>(cfg.hyper.lambda_i));
          total = total ? ops::add(total, weighted) : weighted;
        }
        check_finite(out.l_rec, "l_rec", state.step);
        backward(total);
        state.opt_es.step();
        state.opt_ec.step();
        state.opt_g.step();
      }
    }
  }
  if (phase_observer) phase_observer(2);

  // ---- phase 3: discriminators ----
  if (!cfg.baseline) {
    for (int it = 0; it < cfg.disc_iters_per_cycle; ++it) {
      if (cfg.losses.adv_df) {
        zero_all(state);
        ShapeFeat<T> f_rgb, f_gray;
        {
          NoGradGuard ng;
          f_rgb = m.shape_encoder.forward(x_rgb());
          f_gray = m.shape_encoder.forward(x_gray());
        }
        auto value = losses::adversarial_value_graph(m.feat_disc.forward(f_rgb),
                                                     m.feat_disc.forward(f_gray));
        out.l_adv_df = static_cast<double>(value->value[0]);
        check_finite(out.l_adv_df, "l_adv_DF", state.step);
        backward(ops::scale(value, T(-1)));
        state.opt_df.step();
      }
      if (cfg.losses.adv_di) {
        zero_all(state);
        Var<T> x_hat;
        {
          NoGradGuard ng;
          auto f_gray = m.shape_encoder.forward(x_gray());
          auto f_c = m.color_encoder.forward(x_prime());
          x_hat = m.generator.forward(f_gray.map, f_c);
        }
        auto value = losses::adversarial_value_graph(m.image_disc.forward(x_rgb()),
                                                     m.image_disc.forward(x_hat));
        out.l_adv_di = static_cast<double>(value->value[0]);
        check_finite(out.l_adv_di, "l_adv_DI", state.step);
        backward(ops::scale(value, T(-1)));
        state.opt_di.step();
      }
    }
  }
  if (phase_observer) phase_observer(3);

  ++state.step;
  state.loss_sums.l_id += out.l_id;
  state.loss_sums.l_tri += out.l_tri;
  state.loss_sums.l_adv_df += out.l_adv_df;
  state.loss_sums.l_rec += out.l_rec;
  state.loss_sums.l_adv_di += out.l_adv_di;
  return out;
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace train_detail {

template <typename T>
void save_opt(const std::filesystem::path& file, nn::Adam<T>& opt) {
  TensorArchiveWriter w;
  const auto& params = opt.params();
  for (size_t i = 0; i < params.size(); ++i) {
    w.add(params[i].name + ".m", opt.moments_m()[i]);
    w.add(params[i].name + ".v", opt.moments_v()[i]);
  }
  w.add("__step_count", Tensor<int64_t>({1}, {opt.step_count()}));
  w.save(file);
}

template <typename T>
void load_opt(const std::filesystem::path& file, nn::Adam<T>& opt) {
  TensorArchiveReader r(file);
  const auto& params = opt.params();
  for (size_t i = 0; i < params.size(); ++i) {
    opt.moments_m()[i] = r.get<T>(params[i].name + ".m");
    opt.moments_v()[i] = r.get<T>(params[i].name + ".v");
  }
  opt.step_count_mutable() = r.get<int64_t>("__step_count")[0];
}

}  // namespace train_detail

inline std::string config_hash(const ModelConfig& mc, const TrainConfig& tc) {
  return sha256_hex(model_config_to_json(mc).dump() + train_config_to_json(tc).dump());
}

// Writes the checkpoint into a temp directory then renames it into place, so
// a failed write never leaves a partial checkpoint behind.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, TrainState<T>& state,
                     const TrainConfig& tc) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  try {
    fs::create_directories(tmp);
    state.model.save_params(tmp);
    train_detail::save_opt(tmp / "opt_es.bin", state.opt_es);
    train_detail::save_opt(tmp / "opt_ec.bin", state.opt_ec);
    train_detail::save_opt(tmp / "opt_df.bin", state.opt_df);
    train_detail::save_opt(tmp / "opt_g.bin", state.opt_g);
    train_detail::save_opt(tmp / "opt_di.bin", state.opt_di);
    nlohmann::json j{{"version", "1"},
                     {"step", state.step},
                     {"config_hash", config_hash(state.model.cfg, tc)},
                     {"model_config", model_config_to_json(state.model.cfg)},
                     {"train_config", train_config_to_json(tc)},
                     {"rng", {{"sampler", state.sampler_rng.serialize()}}},
                     {"loss_sums",
                      {{"l_id", state.loss_sums.l_id},
                       {"l_tri", state.loss_sums.l_tri},
                       {"l_adv_DF", state.loss_sums.l_adv_df},
                       {"l_rec", state.loss_sums.l_rec},
                       {"l_adv_DI", state.loss_sums.l_adv_di}}}};
    write_text_file(tmp / "checkpoint.json", j.dump(2) + "\n");
    fs::remove_all(dir, ec);
    fs::rename(tmp, dir);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
}

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& dir) {
  const auto meta_path = dir / "checkpoint.json";
  require(std::filesystem::exists(meta_path), Errc::bad_checkpoint,
          "missing checkpoint.json in " + dir.string());
  const auto j = nlohmann::json::parse(read_text_file(meta_path));
  require(j.at("version").get<std::string>() == "1", Errc::bad_checkpoint,
          "unsupported checkpoint version");
  const auto mc = model_config_from_json(j.at("model_config"));
  const auto tc = train_config_from_json(j.at("train_config"));
  TrainState<T> state(mc, tc);
  state.model.load_params(dir);
  train_detail::load_opt(dir / "opt_es.bin", state.opt_es);
  train_detail::load_opt(dir / "opt_ec.bin", state.opt_ec);
  train_detail::load_opt(dir / "opt_df.bin", state.opt_df);
  train_detail::load_opt(dir / "opt_g.bin", state.opt_g);
  train_detail::load_opt(dir / "opt_di.bin", state.opt_di);
  state.step = j.at("step").get<int64_t>();
  state.sampler_rng = Rng::deserialize(j.at("rng").at("sampler").get<std::string>());
  const auto& ls = j.at("loss_sums");
  state.loss_sums.l_id = ls.at("l_id").get<double>();
  state.loss_sums.l_tri = ls.at("l_tri").get<double>();
  state.loss_sums.l_adv_df = ls.at("l_adv_DF").get<double>();
  state.loss_sums.l_rec = ls.at("l_rec").get<double>();
  state.loss_sums.l_adv_di = ls.at("l_adv_DI").get<double>();
  return state;
}

inline TrainConfig checkpoint_train_config(const std::filesystem::path& dir) {
  const auto j = nlohmann::json::parse(read_text_file(dir / "checkpoint.json"));
  return train_config_from_json(j.at("train_config"));
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct StepRecord {
  int64_t step = 0;
  LossValues losses;
  double wall_ms = 0;
};

// Runs (or resumes) the alternating schedule for cfg.total_iters steps.
// Checkpoints land under out_dir/ckpt and per-step records go to on_step.
template <typename T>
TrainState<T> train(const Dataset& dataset, ModelConfig model_cfg, const TrainConfig& cfg,
                    const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                    const std::function<void(const StepRecord&)>& on_step = nullptr,
                    std::optional<TrainState<T>> resume = std::nullopt,
                    const std::function<void(const std::string&)>& warn = nullptr) {
  cfg.validate();
  BatchSampler sampler(dataset, cfg.batch_p, cfg.batch_k, warn);
  model_cfg.num_classes = sampler.num_classes();

  TrainState<T> state = resume ? std::move(*resume) : TrainState<T>(model_cfg, cfg);
  require(state.model.cfg.num_classes == sampler.num_classes(), Errc::bad_checkpoint,
          "checkpoint was trained with " + std::to_string(state.model.cfg.num_classes) +
              " classes but the dataset has " + std::to_string(sampler.num_classes()));

  while (state.step < cfg.total_iters) {
    const auto t0 = std::chrono::steady_clock::now();
    auto batch = sampler.next(state.sampler_rng);
    LossValues lv;
    try {
      lv = train_step(state, batch, cfg);
    } catch (const Error& e) {
      if (e.code() == Errc::non_finite_loss) throw;
      throw Error(e.code(), std::string(e.what()) + " (train step " + std::to_string(state.step) + ")");
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (on_step) {
      StepRecord rec{state.step, lv,
                     std::chrono::duration<double, std::milli>(t1 - t0).count()};
      on_step(rec);
    }
    if (out_dir && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step < cfg.total_iters) {
      save_checkpoint(*out_dir / "ckpt", state, cfg);
    }
  }
  if (out_dir) save_checkpoint(*out_dir / "ckpt", state, cfg);
  return state;
}

}  // namespace caseforge
