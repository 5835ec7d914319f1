#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "caseforge/eval/evaluate.hpp"
#include "caseforge/exp/config.hpp"

namespace caseforge {

struct RunSummary {
  std::string label;
  std::string mode = "casenet";  // casenet | baseline
  uint64_t seed = 0;
  std::string profile = "desk";
  std::string config_hash;
  LossSwitches ablation;
  std::map<std::string, EvalReport> reports;  // key: "<protocol>/<clothing>"
  LossValues final_losses;                    // running averages over the run
  double wall_ms = 0;
};

inline nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json reports;
  for (const auto& [key, r] : s.reports) reports[key] = report_to_json(r);
  return nlohmann::json{
      {"version", "1"},
      {"label", s.label},
      {"mode", s.mode},
      {"seed", s.seed},
      {"profile", s.profile},
      {"config_hash", s.config_hash},
      {"ablation",
       {{"disable_l_id", !s.ablation.id},
        {"disable_l_tri", !s.ablation.tri},
        {"disable_l_adv_DF", !s.ablation.adv_df},
        {"disable_l_rec", !s.ablation.rec},
        {"disable_l_adv_DI", !s.ablation.adv_di}}},
      {"reports", reports},
      {"final_losses",
       {{"l_id", s.final_losses.l_id},
        {"l_tri", s.final_losses.l_tri},
        {"l_adv_DF", s.final_losses.l_adv_df},
        {"l_rec", s.final_losses.l_rec},
        {"l_adv_DI", s.final_losses.l_adv_di}}},
      {"wall_ms", s.wall_ms}};
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.label = j.at("label").get<std::string>();
  s.mode = j.at("mode").get<std::string>();
  s.seed = j.at("seed").get<uint64_t>();
  s.profile = j.at("profile").get<std::string>();
  s.config_hash = j.at("config_hash").get<std::string>();
  const auto& a = j.at("ablation");
  s.ablation.id = !a.at("disable_l_id").get<bool>();
  s.ablation.tri = !a.at("disable_l_tri").get<bool>();
  s.ablation.adv_df = !a.at("disable_l_adv_DF").get<bool>();
  s.ablation.rec = !a.at("disable_l_rec").get<bool>();
  s.ablation.adv_di = !a.at("disable_l_adv_DI").get<bool>();
  for (const auto& [key, r] : j.at("reports").items()) s.reports[key] = report_from_json(r);
  const auto& l = j.at("final_losses");
  s.final_losses.l_id = l.at("l_id").get<double>();
  s.final_losses.l_tri = l.at("l_tri").get<double>();
  s.final_losses.l_adv_df = l.at("l_adv_DF").get<double>();
  s.final_losses.l_rec = l.at("l_rec").get<double>();
  s.final_losses.l_adv_di = l.at("l_adv_DI").get<double>();
  s.wall_ms = j.at("wall_ms").get<double>();
  return s;
}

namespace exp_detail {

inline std::string loss_ndjson_line(const StepRecord& r) {
  nlohmann::json j{{"step", r.step},          {"l_id", r.losses.l_id},
                   {"l_tri", r.losses.l_tri}, {"l_adv_DF", r.losses.l_adv_df},
                   {"l_rec", r.losses.l_rec}, {"l_adv_DI", r.losses.l_adv_di},
                   {"wall_ms", r.wall_ms}};
  return j.dump();
}

inline std::string ablation_label(const LossSwitches& s) {
  std::vector<std::string> off;
  if (!s.id) off.push_back("l_id");
  if (!s.tri) off.push_back("l_tri");
  if (!s.adv_df) off.push_back("l_adv_DF");
  if (!s.rec) off.push_back("l_rec");
  if (!s.adv_di) off.push_back("l_adv_DI");
  if (off.empty()) return "full";
  std::string out = "wo";
  for (const auto& o : off) out += "_" + o;
  return out;
}

}  // namespace exp_detail

// Result bundle for callers that keep working with the trained model.
struct ExperimentResult {
  RunSummary summary;
  Dataset dataset;
  TrainState<float> state;
};

// train -> evaluate -> persist. Artifacts under out_dir: data/ (when
// generated here), ckpt/, logs/train.ndjson, reports/*.json, summary.json,
// table.md and a manifest.json index of everything written.
inline ExperimentResult run_experiment_full(const ExperimentConfig& cfg,
                                            const std::filesystem::path& out_dir,
                                            bool baseline = false,
                                            const std::function<void(const std::string&)>& log =
                                                nullptr) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "logs");
  fs::create_directories(out_dir / "reports");
  std::vector<std::string> artifacts;

  auto say = [&](const std::string& m) {
    if (log) log(m);
  };

  // ---- data ----
  Dataset ds;
  if (cfg.data_dir) {
    say("loading dataset from " + *cfg.data_dir);
    ds = load_dataset(*cfg.data_dir);
  } else {
    say("generating dataset");
    generate_dataset(cfg.data, cfg.seed, out_dir / "data");
    ds = load_dataset(out_dir / "data");
    artifacts.push_back("data");
  }

  // ---- train ----
  ModelConfig mc = cfg.model_config();
  require(mc.image_h == ds.manifest.config.image_h && mc.image_w == ds.manifest.config.image_w,
          Errc::config_invalid, "model image size does not match the dataset");
  TrainConfig tc = cfg.train_config(baseline);
  std::ofstream log_stream(out_dir / "logs" / "train.ndjson");
  require(static_cast<bool>(log_stream), Errc::io_error, "cannot open training log");
  say("training " + std::string(baseline ? "baseline" : "casenet") + " for " +
      std::to_string(tc.total_iters) + " iters");
  auto state = train<float>(
      ds, mc, tc, out_dir,
      [&](const StepRecord& r) { log_stream << exp_detail::loss_ndjson_line(r) << "\n"; },
      std::nullopt, [&](const std::string& w) { say("warning: " + w); });
  log_stream.flush();
  artifacts.push_back("ckpt");
  artifacts.push_back("logs/train.ndjson");

  // ---- evaluate ----
  RunSummary summary;
  summary.label = out_dir.filename().string();
  summary.mode = baseline ? "baseline" : "casenet";
  summary.seed = cfg.seed;
  summary.profile = cfg.profile;
  summary.config_hash =
      sha256_hex(experiment_config_to_json(cfg).dump() + (baseline ? "|baseline" : "|casenet"));
  summary.ablation = cfg.ablation;
  summary.final_losses = state.running_average();

  for (const auto& code : cfg.eval.protocols) {
    for (const auto& filter : cfg.eval.clothing_filters) {
      Protocol p = Protocol::from_code(code);
      p.same_view_exclusion = cfg.eval.same_view_exclusion;
      p.clothing = clothing_filter_from_name(filter);
      say("evaluating protocol " + code + "/" + filter);
      auto report = evaluate(state.model, ds, p, cfg.eval.cmc_k, cfg.eval.l2_normalize);
      const std::string key = code + "/" + filter;
      summary.reports[key] = report;
      const std::string fname = "reports/report_" + code + "_" + filter + ".json";
      write_text_file(out_dir / fname, report_to_json(report).dump(2) + "\n");
      artifacts.push_back(fname);
    }
  }

  const auto t1 = std::chrono::steady_clock::now();
  summary.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  write_text_file(out_dir / "summary.json", summary_to_json(summary).dump(2) + "\n");
  artifacts.push_back("summary.json");

  // human-readable table for this one run
  {
    std::ostringstream os;
    os << "| protocol | clothing | R1 | R5 | R10 | mAP |\n";
    os << "|---|---|---|---|---|---|\n";
    for (const auto& [key, r] : summary.reports) {
      const auto slash = key.find('/');
      os << "| " << key.substr(0, slash) << " | " << key.substr(slash + 1) << " | ";
      auto rank_or_dash = [&](int k) {
        return static_cast<int>(r.cmc.size()) >= k ? std::to_string(r.rank(k)) : std::string("-");
      };
      os << rank_or_dash(1) << " | " << rank_or_dash(5) << " | " << rank_or_dash(10) << " | "
         << r.map << " |\n";
    }
    write_text_file(out_dir / "table.md", os.str());
    artifacts.push_back("table.md");
  }

  nlohmann::json index{{"version", "1"}, {"artifacts", artifacts}};
  write_text_file(out_dir / "manifest.json", index.dump(2) + "\n");

  return ExperimentResult{std::move(summary), std::move(ds), std::move(state)};
}

inline RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 const std::function<void(const std::string&)>& log = nullptr) {
  return run_experiment_full(cfg, out_dir, false, log).summary;
}

// Comparator: shape encoder trained with id + triplet on RGB only; the
// adversarial and generative components stay untouched.
inline RunSummary run_baseline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                               const std::function<void(const std::string&)>& log = nullptr) {
  return run_experiment_full(cfg, out_dir, true, log).summary;
}

// ---------------------------------------------------------------------------
// comparison tables across runs
// ---------------------------------------------------------------------------

// Markdown/CSV table with one row per run summary, R1/R5/R10/mAP per report
// key, sorted by mAP on the first report key (descending).
inline std::string comparison_table(std::vector<RunSummary> summaries, bool csv = false) {
  require(!summaries.empty(), Errc::invalid_argument, "report: need at least one run summary");
  std::vector<std::string> keys;
  for (const auto& [key, r] : summaries.front().reports) keys.push_back(key);
  const std::string primary = keys.empty() ? "" : keys.front();

  std::stable_sort(summaries.begin(), summaries.end(), [&](const RunSummary& a, const RunSummary& b) {
    const double ma = a.reports.count(primary) ? a.reports.at(primary).map : 0;
    const double mb = b.reports.count(primary) ? b.reports.at(primary).map : 0;
    return ma > mb;
  });

  std::ostringstream os;
  auto label_of = [](const RunSummary& s) {
    return s.label + (s.mode == "baseline" ? " (baseline)" : "") +
           (exp_detail::ablation_label(s.ablation) == "full"
                ? ""
                : " [" + exp_detail::ablation_label(s.ablation) + "]");
  };
  if (csv) {
    os << "method,seed";
    for (const auto& k : keys) os << "," << k << ".R1," << k << ".R5," << k << ".R10," << k << ".mAP";
    os << "\n";
    for (const auto& s : summaries) {
      os << label_of(s) << "," << s.seed;
      for (const auto& k : keys) {
        const auto& r = s.reports.at(k);
        auto rk = [&](int n) {
          return static_cast<int>(r.cmc.size()) >= n ? r.rank(n) : 0.0;
        };
        os << "," << rk(1) << "," << rk(5) << "," << rk(10) << "," << r.map;
      }
      os << "\n";
    }
  } else {
    os << "| method | seed |";
    for (const auto& k : keys) os << " " << k << " R1 | R5 | R10 | mAP |";
    os << "\n|---|---|";
    for (size_t i = 0; i < keys.size(); ++i) os << "---|---|---|---|";
    os << "\n";
    for (const auto& s : summaries) {
      os << "| " << label_of(s) << " | " << s.seed << " |";
      for (const auto& k : keys) {
        const auto& r = s.reports.at(k);
        auto rk = [&](int n) {
          return static_cast<int>(r.cmc.size()) >= n ? std::to_string(r.rank(n)) : std::string("-");
        };
        os << " " << rk(1) << " | " << rk(5) << " | " << rk(10) << " | " << r.map << " |";
      }
      os << "\n";
    }
  }
  return os.str();
}

inline RunSummary load_summary(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "summary.json";
  require(std::filesystem::exists(path), Errc::missing_file,
          "missing run summary: " + path.string());
  return summary_from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace caseforge
