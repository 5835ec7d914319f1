#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "caseforge/train/trainer.hpp"

using namespace caseforge;
namespace fs = std::filesystem;

namespace {

GeneratorConfig data_config() {
  GeneratorConfig c;
  c.ids_train = 4;
  c.ids_test = 2;
  c.clothing_variants_test = 2;
  c.poses = 3;
  c.views = 2;
  c.image_h = 16;
  c.image_w = 8;
  c.delta_shape = 0.15;
  return c;
}

ModelConfig model_config() {
  ModelConfig c;
  c.image_h = 16;
  c.image_w = 8;
  c.enc_widths = {4, 8, 16};
  c.feature_dim = 12;
  c.color_dim = 6;
  c.feat_disc_hidden = 16;
  c.img_disc_widths = {4, 8};
  return c;
}

TrainConfig train_config(int64_t iters) {
  TrainConfig c;
  c.total_iters = iters;
  c.batch_p = 2;
  c.batch_k = 2;
  c.seed = 5;
  return c;
}

struct SharedData {
  fs::path dir;
  Dataset ds;
  SharedData() {
    dir = fs::temp_directory_path() / "cf_train_data";
    fs::remove_all(dir);
    fs::create_directories(dir);
    generate_dataset(data_config(), 77, dir);
    ds = load_dataset(dir);
  }
  ~SharedData() { fs::remove_all(dir); }
};

const Dataset& shared_dataset() {
  static SharedData d;
  return d.ds;
}

using Snapshot = std::map<std::string, Tensor<float>>;

Snapshot snap(const ModelBundle<float>& m) {
  Snapshot s;
  for (const auto& p : m.all_params()) s[p.name] = p.var->value;
  return s;
}

bool group_equal(const Snapshot& a, const Snapshot& b, const std::string& prefix) {
  for (const auto& [name, t] : a) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (!(t == b.at(name))) return false;
  }
  return true;
}

}  // namespace

TEST(Training, ZeroStepSizeLeavesParamsUnchanged) {
  const auto& ds = shared_dataset();
  auto tc = train_config(1);
  tc.lr_encoder = 0;
  tc.lr_gan = 0;
  auto mc = model_config();
  BatchSampler sampler(ds, tc.batch_p, tc.batch_k);
  mc.num_classes = sampler.num_classes();
  TrainState<float> state(mc, tc);
  auto before = snap(state.model);
  Rng rng(1);
  auto batch = sampler.next(rng);
  auto lv = train_step(state, batch, tc);
  auto after = snap(state.model);
  for (const auto& [name, t] : before) EXPECT_TRUE(t == after.at(name)) << name;
  // losses still reported
  EXPECT_GT(lv.l_id, 0.0);
  EXPECT_GT(lv.l_rec, 0.0);
  EXPECT_NE(lv.l_adv_df, 0.0);
}

TEST(Training, DeterministicAcrossRuns) {
  const auto& ds = shared_dataset();
  auto tc = train_config(4);
  std::vector<LossValues> h1, h2;
  auto on1 = [&](const StepRecord& r) { h1.push_back(r.losses); };
  auto on2 = [&](const StepRecord& r) { h2.push_back(r.losses); };
  auto s1 = train<float>(ds, model_config(), tc, std::nullopt, on1);
  auto s2 = train<float>(ds, model_config(), tc, std::nullopt, on2);
  auto p1 = snap(s1.model), p2 = snap(s2.model);
  for (const auto& [name, t] : p1) ASSERT_TRUE(t == p2.at(name)) << name;
  ASSERT_EQ(h1.size(), h2.size());
  for (size_t i = 0; i < h1.size(); ++i) {
    EXPECT_EQ(h1[i].l_id, h2[i].l_id);
    EXPECT_EQ(h1[i].l_rec, h2[i].l_rec);
    EXPECT_EQ(h1[i].l_adv_di, h2[i].l_adv_di);
  }
}

TEST(Training, PhaseIsolationSnapshots) {
  const auto& ds = shared_dataset();
  auto tc = train_config(1);
  auto mc = model_config();
  BatchSampler sampler(ds, tc.batch_p, tc.batch_k);
  mc.num_classes = sampler.num_classes();
  TrainState<float> state(mc, tc);
  Rng rng(2);
  auto batch = sampler.next(rng);

  Snapshot before = snap(state.model), at1, at2, at3;
  train_step<float>(state, batch, tc, [&](int phase) {
    if (phase == 1) at1 = snap(state.model);
    if (phase == 2) at2 = snap(state.model);
    if (phase == 3) at3 = snap(state.model);
  });

  // phase 1 only moves the shape encoder (including its classifier head)
  EXPECT_FALSE(group_equal(before, at1, "es"));
  EXPECT_TRUE(group_equal(before, at1, "ec"));
  EXPECT_TRUE(group_equal(before, at1, "df"));
  EXPECT_TRUE(group_equal(before, at1, "g"));
  EXPECT_TRUE(group_equal(before, at1, "di"));

  // phase 2 moves E_S, E_C, G but neither discriminator
  EXPECT_FALSE(group_equal(at1, at2, "es"));
  EXPECT_FALSE(group_equal(at1, at2, "ec"));
  EXPECT_FALSE(group_equal(at1, at2, "g"));
  EXPECT_TRUE(group_equal(at1, at2, "df"));
  EXPECT_TRUE(group_equal(at1, at2, "di"));

  // phase 3 moves only the discriminators
  EXPECT_TRUE(group_equal(at2, at3, "es"));
  EXPECT_TRUE(group_equal(at2, at3, "ec"));
  EXPECT_TRUE(group_equal(at2, at3, "g"));
  EXPECT_FALSE(group_equal(at2, at3, "df"));
  EXPECT_FALSE(group_equal(at2, at3, "di"));
}

TEST(Training, ResumeReproducesUninterruptedRunBitwise) {
  const auto& ds = shared_dataset();
  const auto out = fs::temp_directory_path() / "cf_train_resume";
  fs::remove_all(out);
  fs::create_directories(out);

  auto full = train<float>(ds, model_config(), train_config(8));

  auto tc4 = train_config(4);
  train<float>(ds, model_config(), tc4, out);
  auto resumed_state = load_checkpoint<float>(out / "ckpt");
  EXPECT_EQ(resumed_state.step, 4);
  auto resumed = train<float>(ds, model_config(), train_config(8), std::nullopt, nullptr,
                              std::move(resumed_state));

  auto pf = snap(full.model), pr = snap(resumed.model);
  for (const auto& [name, t] : pf) ASSERT_TRUE(t == pr.at(name)) << name;
  EXPECT_EQ(full.step, resumed.step);
  EXPECT_EQ(full.sampler_rng.serialize(), resumed.sampler_rng.serialize());
  EXPECT_EQ(full.loss_sums.l_rec, resumed.loss_sums.l_rec);
  fs::remove_all(out);
}

TEST(Training, CheckpointRoundTripIsExact) {
  const auto& ds = shared_dataset();
  const auto out = fs::temp_directory_path() / "cf_train_ckpt";
  fs::remove_all(out);
  fs::create_directories(out);
  auto tc = train_config(3);
  auto state = train<float>(ds, model_config(), tc, out);
  auto loaded = load_checkpoint<float>(out / "ckpt");
  auto a = snap(state.model), b = snap(loaded.model);
  for (const auto& [name, t] : a) ASSERT_TRUE(t == b.at(name)) << name;
  EXPECT_EQ(loaded.step, 3);
  EXPECT_EQ(state.opt_es.step_count(), loaded.opt_es.step_count());
  fs::remove_all(out);
}

TEST(Training, TotalItersZeroReturnsInitializedState) {
  const auto& ds = shared_dataset();
  int records = 0;
  auto s = train<float>(ds, model_config(), train_config(0), std::nullopt,
                        [&](const StepRecord&) { ++records; });
  EXPECT_EQ(s.step, 0);
  EXPECT_EQ(records, 0);
}

TEST(Training, BaselineNeverTouchesGanComponents) {
  const auto& ds = shared_dataset();
  auto tc = train_config(3);
  tc.baseline = true;
  auto mc = model_config();
  BatchSampler sampler(ds, tc.batch_p, tc.batch_k);
  mc.num_classes = sampler.num_classes();
  TrainState<float> state(mc, tc);
  auto before = snap(state.model);
  auto s = train<float>(ds, mc, tc, std::nullopt, nullptr, std::move(state));
  auto after = snap(s.model);
  EXPECT_FALSE(group_equal(before, after, "es"));
  EXPECT_TRUE(group_equal(before, after, "ec"));
  EXPECT_TRUE(group_equal(before, after, "df"));
  EXPECT_TRUE(group_equal(before, after, "g"));
  EXPECT_TRUE(group_equal(before, after, "di"));
}

TEST(Training, AblationSwitchesFreezeTheirNetworks) {
  const auto& ds = shared_dataset();
  // w/o L_adv_DF: feature discriminator never updates
  {
    auto tc = train_config(2);
    tc.losses.adv_df = false;
    auto mc = model_config();
    BatchSampler sampler(ds, tc.batch_p, tc.batch_k);
    mc.num_classes = sampler.num_classes();
    TrainState<float> state(mc, tc);
    auto before = snap(state.model);
    auto s = train<float>(ds, mc, tc, std::nullopt, nullptr, std::move(state));
    auto after = snap(s.model);
    EXPECT_TRUE(group_equal(before, after, "df"));
    EXPECT_FALSE(group_equal(before, after, "g"));
  }
  // w/o L_adv_DI: image discriminator never updates
  {
    auto tc = train_config(2);
    tc.losses.adv_di = false;
    auto mc = model_config();
    BatchSampler sampler(ds, tc.batch_p, tc.batch_k);
    mc.num_classes = sampler.num_classes();
    TrainState<float> state(mc, tc);
    auto before = snap(state.model);
    auto s = train<float>(ds, mc, tc, std::nullopt, nullptr, std::move(state));
    auto after = snap(s.model);
    EXPECT_TRUE(group_equal(before, after, "di"));
    EXPECT_FALSE(group_equal(before, after, "df"));
  }
}

TEST(Training, DivergenceReportsLossAndStep) {
  const auto& ds = shared_dataset();
  auto tc = train_config(60);
  tc.lr_encoder = 1e18;
  tc.lr_gan = 1e18;
  tc.grad_clip = 0;
  try {
    train<float>(ds, model_config(), tc);
    FAIL() << "expected non_finite_loss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite_loss);
    EXPECT_NE(std::string(e.what()).find("at step"), std::string::npos);
  }
}

TEST(Training, FailedCheckpointLeavesNoPartialState) {
  const auto& ds = shared_dataset();
  auto tc = train_config(1);
  auto mc = model_config();
  BatchSampler sampler(ds, tc.batch_p, tc.batch_k);
  mc.num_classes = sampler.num_classes();
  TrainState<float> state(mc, tc);

  const auto base = fs::temp_directory_path() / "cf_ckpt_fail";
  fs::remove_all(base);
  fs::create_directories(base);
  write_text_file(base / "blocked", "");  // a file where the checkpoint dir should go
  EXPECT_THROW(save_checkpoint(base / "blocked" / "ckpt", state, tc), std::exception);
  EXPECT_FALSE(fs::exists(base / "blocked" / "ckpt"));
  EXPECT_FALSE(fs::exists(fs::path((base / "blocked" / "ckpt").string() + ".tmp")));
  fs::remove_all(base);
}

TEST(Training, ConfigJsonRoundTrip) {
  auto tc = train_config(123);
  tc.losses.rec = false;
  tc.baseline = true;
  tc.grad_clip = 2.5;
  auto j = train_config_to_json(tc);
  auto back = train_config_from_json(j);
  EXPECT_EQ(train_config_to_json(back), j);
  EXPECT_FALSE(back.losses.rec);
  EXPECT_TRUE(back.baseline);
}
