#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "caseforge/exp/experiment.hpp"

using namespace caseforge;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_experiment_json() {
  return nlohmann::json{
      {"version", "1"},
      {"seed", 9},
      {"profile", "desk"},
      {"data",
       {{"ids_train", 3},
        {"ids_test", 2},
        {"clothing_variants_test", 2},
        {"poses", 3},
        {"views", 2},
        {"image_h", 16},
        {"image_w", 8},
        {"delta_shape", 0.2}}},
      {"model",
       {{"feature_dim", 12},
        {"color_dim", 6},
        {"enc_widths", {4, 8, 16}},
        {"feat_disc_hidden", 16},
        {"img_disc_widths", {4, 8}}}},
      {"train", {{"total_iters", 4}, {"batch_p", 2}, {"batch_k", 2}}},
      {"eval", {{"protocols", {"rr", "gr"}}, {"cmc_k", 5}}},
      {"ablation", {{"disable_l_adv_DI", false}}}};
}

std::string cli_path() {
  const char* p = std::getenv("CASEFORGE_BIN");
  return p ? p : "";
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const auto tmp = fs::temp_directory_path() / "cf_cli_out.txt";
  const std::string cmd = cli_path() + " " + args + " >" + tmp.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (out) *out = read_text_file(tmp);
  return WEXITSTATUS(rc);
}

}  // namespace

TEST(ExperimentConfig, RoundTripIsIdentityOnDocumentedKeys) {
  auto cfg = experiment_config_from_json(small_experiment_json());
  auto j1 = experiment_config_to_json(cfg);
  auto cfg2 = experiment_config_from_json(j1);
  auto j2 = experiment_config_to_json(cfg2);
  EXPECT_EQ(j1, j2);
}

TEST(ExperimentConfig, UnknownKeySuggestsClosest) {
  auto j = small_experiment_json();
  j["train"]["lamda_I"] = 0.5;  // typo for lambda_i
  try {
    experiment_config_from_json(j);
    FAIL() << "expected config_invalid";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config_invalid);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lamda_I"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lambda_i"), std::string::npos) << msg;
  }
}

TEST(ExperimentConfig, UnknownTopLevelAndAblationKeysRejected) {
  auto j = small_experiment_json();
  j["experiment"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), Error);

  j = small_experiment_json();
  j["ablation"]["disable_l_everything"] = true;
  EXPECT_THROW(experiment_config_from_json(j), Error);
}

TEST(ExperimentConfig, DefaultsMatchPaperHyperparameters) {
  ExperimentConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.train.hyper.margin, 2.0);
  EXPECT_DOUBLE_EQ(cfg.train.hyper.lambda_tri, 1.0);
  EXPECT_DOUBLE_EQ(cfg.train.hyper.lambda_i, 0.1);
  EXPECT_DOUBLE_EQ(cfg.train.lr_encoder, 1e-4);
  EXPECT_DOUBLE_EQ(cfg.train.lr_gan, 2e-4);
}

TEST(ExperimentConfig, ProfileSelectsModelDefaults) {
  auto j = small_experiment_json();
  j["profile"] = "paper";
  j.erase("model");
  j["data"]["image_h"] = 256;
  j["data"]["image_w"] = 128;
  auto cfg = experiment_config_from_json(j);
  auto mc = cfg.model_config();
  EXPECT_EQ(mc.feature_dim, 2048);
  EXPECT_TRUE(mc.feat_disc_conv);
}

TEST(RunSummary, JsonRoundTrip) {
  RunSummary s;
  s.label = "run_a";
  s.mode = "baseline";
  s.seed = 4;
  s.config_hash = "abc";
  s.ablation.rec = false;
  EvalReport r;
  r.protocol = Protocol::from_code("rr");
  r.cmc = {0.4, 0.6};
  r.map = 0.3;
  r.n_query = 5;
  r.n_gallery = 50;
  s.reports["rr/any"] = r;
  auto j = summary_to_json(s);
  auto back = summary_from_json(j);
  EXPECT_EQ(summary_to_json(back), j);
}

TEST(Report, SortsByMapDescending) {
  auto mk = [](const std::string& label, double map) {
    RunSummary s;
    s.label = label;
    EvalReport r;
    r.protocol = Protocol::from_code("rr");
    r.cmc = {map};
    r.map = map;
    s.reports["rr/any"] = r;
    return s;
  };
  auto table = comparison_table({mk("low", 0.2), mk("high", 0.9), mk("mid", 0.5)});
  const auto hi = table.find("high");
  const auto mid = table.find("mid");
  const auto lo = table.find("low");
  ASSERT_NE(hi, std::string::npos);
  EXPECT_LT(hi, mid);
  EXPECT_LT(mid, lo);
  // identical metrics produce identical rows
  auto t2 = comparison_table({mk("a", 0.5), mk("a", 0.5)});
  const auto first = t2.find("| a |");
  const auto second = t2.find("| a |", first + 1);
  EXPECT_NE(second, std::string::npos);
}

// ---------------------------------------------------------------------------
// end-to-end through the installed binary
// ---------------------------------------------------------------------------

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    if (cli_path().empty()) GTEST_SKIP() << "CASEFORGE_BIN not set";
    base_ = fs::temp_directory_path() / "cf_cli_e2e";
    fs::remove_all(base_);
    fs::create_directories(base_);
    write_text_file(base_ / "config.json", small_experiment_json().dump(2));
  }
  void TearDown() override { fs::remove_all(base_); }
  fs::path base_;
};

TEST_F(CliTest, FullPipeline) {
  std::string out;
  // generate-data
  ASSERT_EQ(run_cli("--config " + (base_ / "config.json").string() + " --seed 5 --out " +
                        (base_ / "data").string() + " generate-data",
                    &out), 0) << out;
  ASSERT_TRUE(fs::exists(base_ / "data" / "manifest.json"));

  // train
  ASSERT_EQ(run_cli("--config " + (base_ / "config.json").string() + " --out " +
                        (base_ / "trained").string() + " train --data " + (base_ / "data").string(),
                    &out), 0) << out;
  ASSERT_TRUE(fs::exists(base_ / "trained" / "ckpt" / "checkpoint.json"));

  // evaluate
  ASSERT_EQ(run_cli("--out " + (base_ / "report.json").string() + " evaluate --data " +
                        (base_ / "data").string() + " --ckpt " + (base_ / "trained" / "ckpt").string() +
                        " --protocol gr --cmc-k 5",
                    &out), 0) << out;
  auto rj = nlohmann::json::parse(read_text_file(base_ / "report.json"));
  EXPECT_EQ(rj.at("protocol"), "gr");
  EXPECT_TRUE(rj.contains("cmc"));
  EXPECT_TRUE(rj.contains("map"));
  EXPECT_TRUE(rj.contains("n_query"));
  EXPECT_TRUE(rj.contains("dropped_queries"));

  // embed + retrieve
  ASSERT_EQ(run_cli("--out " + (base_ / "emb.bin").string() + " embed --data " +
                        (base_ / "data").string() + " --ckpt " + (base_ / "trained" / "ckpt").string() +
                        " --split gallery --modality gray",
                    &out), 0) << out;
  ASSERT_EQ(run_cli("retrieve --embeddings " + (base_ / "emb.bin").string() +
                        " --query-id 0 --k 3",
                    &out), 0) << out;
  EXPECT_NE(out.find("1. row"), std::string::npos);

  // run + report
  ASSERT_EQ(run_cli("--config " + (base_ / "config.json").string() + " --out " +
                        (base_ / "exp").string() + " run",
                    &out), 0) << out;
  ASSERT_TRUE(fs::exists(base_ / "exp" / "summary.json"));
  ASSERT_TRUE(fs::exists(base_ / "exp" / "manifest.json"));
  ASSERT_EQ(run_cli("report " + (base_ / "exp").string(), &out), 0) << out;
  EXPECT_NE(out.find("mAP"), std::string::npos);
}

TEST_F(CliTest, ErrorsAreMachineParsable) {
  std::string out;
  // missing dataset directory
  EXPECT_NE(run_cli("evaluate --data /nonexistent_cf --ckpt /nonexistent_ck", &out), 0);
  EXPECT_NE(out.find("error["), std::string::npos) << out;

  // config typo propagates the suggestion
  auto j = small_experiment_json();
  j["train"].erase("total_iters");
  j["train"]["total_itres"] = 4;
  write_text_file(base_ / "bad.json", j.dump());
  EXPECT_NE(run_cli("--config " + (base_ / "bad.json").string() + " --out " +
                        (base_ / "x").string() + " run",
                    &out), 0);
  EXPECT_NE(out.find("error[config_invalid]"), std::string::npos) << out;
  EXPECT_NE(out.find("total_iters"), std::string::npos) << out;
}

TEST_F(CliTest, DeterministicRunSummaries) {
  std::string out;
  ASSERT_EQ(run_cli("--config " + (base_ / "config.json").string() + " --out " +
                        (base_ / "r1").string() + " run", &out), 0) << out;
  ASSERT_EQ(run_cli("--config " + (base_ / "config.json").string() + " --out " +
                        (base_ / "r2").string() + " run", &out), 0) << out;
  auto s1 = summary_to_json(load_summary(base_ / "r1"));
  auto s2 = summary_to_json(load_summary(base_ / "r2"));
  s1.erase("wall_ms");
  s2.erase("wall_ms");
  s1.erase("label");
  s2.erase("label");
  EXPECT_EQ(s1, s2);
}

TEST_F(CliTest, BaselineRunLeavesGanUntouched) {
  std::string out;
  ASSERT_EQ(run_cli("--config " + (base_ / "config.json").string() + " --out " +
                        (base_ / "base").string() + " run-baseline", &out), 0) << out;
  auto s = load_summary(base_ / "base");
  EXPECT_EQ(s.mode, "baseline");
  // the checkpointed GAN components must equal a fresh init with the same seed
  auto state = load_checkpoint<float>(base_ / "base" / "ckpt");
  auto cfg = load_experiment_config((base_ / "config.json").string());
  auto mc = cfg.model_config();
  mc.num_classes = state.model.cfg.num_classes;
  TrainState<float> fresh(mc, cfg.train_config(true));
  auto trained = state.model.params_generator();
  auto init = fresh.model.params_generator();
  for (size_t i = 0; i < trained.size(); ++i)
    ASSERT_TRUE(trained[i].var->value == init[i].var->value) << trained[i].name;
}
