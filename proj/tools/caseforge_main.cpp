// caseforge: clothing-color-agnostic person re-ID at desk scale.
// Subcommands: generate-data, train, evaluate, embed, retrieve, run,
// run-baseline, report.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>

#include "caseforge/exp/experiment.hpp"

using namespace caseforge;
namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<std::string> profile;
};

std::string default_data_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("CASEFORGE_DATA_DIR")) return env;
  throw Error(Errc::invalid_argument,
              "no dataset directory: pass --data or set CASEFORGE_DATA_DIR");
}

ExperimentConfig load_config_with_overrides(const GlobalArgs& g) {
  require(!g.config.empty(), Errc::invalid_argument, "missing --config");
  auto cfg = load_experiment_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.profile) {
    cfg.profile = *g.profile;
    cfg.validate();
  }
  return cfg;
}

void progress(const std::string& msg) { std::cout << "[caseforge] " << msg << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CASE-Net desk-scale re-identification workbench"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config, "experiment config JSON")->envname("CASEFORGE_CONFIG");
  app.add_option("--out", g.out, "output directory / file");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "seed override");
  std::string profile_value;
  auto* profile_opt =
      app.add_option("--profile", profile_value, "model profile override (desk|paper)")
          ->check(CLI::IsMember({"desk", "paper"}));

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "render the synthetic clothing-change dataset");

  // train
  auto* tr = app.add_subcommand("train", "train CASE-Net on a generated dataset");
  std::string tr_data, tr_resume;
  tr->add_option("--data", tr_data, "dataset directory");
  tr->add_option("--resume", tr_resume, "checkpoint directory to resume from");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "compute CMC/mAP under a protocol");
  std::string ev_data, ev_ckpt, ev_protocol = "rr", ev_clothing = "any";
  bool ev_no_view_excl = false, ev_l2 = false;
  int ev_cmc_k = 10;
  ev->add_option("--data", ev_data, "dataset directory");
  ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--protocol", ev_protocol, "rr|gr|rg|gg (query/gallery modality)")
      ->check(CLI::IsMember({"rr", "gr", "rg", "gg"}));
  ev->add_option("--clothing", ev_clothing, "gallery clothing filter: any|same|diff")
      ->check(CLI::IsMember({"any", "same", "diff"}));
  ev->add_flag("--no-view-exclusion", ev_no_view_excl, "keep same-id same-view gallery entries");
  ev->add_flag("--l2-normalize", ev_l2, "L2-normalize features before retrieval");
  ev->add_option("--cmc-k", ev_cmc_k, "CMC curve length");

  // embed
  auto* em = app.add_subcommand("embed", "dump shape embeddings for a split");
  std::string em_data, em_ckpt, em_split = "gallery", em_modality = "rgb";
  bool em_l2 = false;
  em->add_option("--data", em_data, "dataset directory");
  em->add_option("--ckpt", em_ckpt, "checkpoint directory")->required();
  em->add_option("--split", em_split, "train|query|gallery")
      ->check(CLI::IsMember({"train", "query", "gallery"}));
  em->add_option("--modality", em_modality, "rgb|gray")->check(CLI::IsMember({"rgb", "gray"}));
  em->add_flag("--l2-normalize", em_l2, "L2-normalize rows");

  // retrieve
  auto* re = app.add_subcommand("retrieve", "rank matches for one embedded query row");
  std::string re_embeddings;
  int64_t re_query = 0, re_k = 10;
  re->add_option("--embeddings", re_embeddings, "embeddings.bin from `embed`")->required();
  re->add_option("--query-id", re_query, "row index used as the query")->required();
  re->add_option("--k", re_k, "number of matches to print");

  // run / run-baseline
  auto* run = app.add_subcommand("run", "full experiment: data -> train -> evaluate -> summary");
  auto* runb = app.add_subcommand("run-baseline", "same pipeline with the RGB-only id+triplet baseline");

  // report
  auto* rep = app.add_subcommand("report", "comparison table across run directories");
  std::vector<std::string> rep_dirs;
  bool rep_csv = false;
  rep->add_option("dirs", rep_dirs, "run directories containing summary.json")->required();
  rep->add_flag("--csv", rep_csv, "emit CSV instead of Markdown");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed_value;
  if (*profile_opt) g.profile = profile_value;

  try {
    if (gen->parsed()) {
      require(!g.out.empty(), Errc::invalid_argument, "generate-data: missing --out");
      require(!g.config.empty(), Errc::invalid_argument, "generate-data: missing --config");
      auto j = nlohmann::json::parse(read_text_file(g.config));
      GeneratorConfig dc = generator_config_from_json_strict(j.contains("data") ? j.at("data") : j);
      const uint64_t seed = g.seed.value_or(1);
      auto manifest = generate_dataset(dc, seed, g.out);
      auto counts = manifest.counts();
      progress("wrote " + std::to_string(manifest.samples.size()) + " images (train " +
               std::to_string(counts["train"]) + ", query " + std::to_string(counts["query"]) +
               ", gallery " + std::to_string(counts["gallery"]) + ") to " + g.out);
    } else if (tr->parsed()) {
      require(!g.out.empty(), Errc::invalid_argument, "train: missing --out");
      auto cfg = load_config_with_overrides(g);
      auto ds = load_dataset(default_data_dir(tr_data));
      ModelConfig mc = cfg.model_config();
      TrainConfig tc = cfg.train_config(false);
      fs::create_directories(fs::path(g.out) / "logs");
      std::ofstream log_stream(fs::path(g.out) / "logs" / "train.ndjson");
      std::optional<TrainState<float>> resume;
      if (!tr_resume.empty()) {
        resume = load_checkpoint<float>(tr_resume);
        progress("resuming from step " + std::to_string(resume->step));
      }
      auto state = train<float>(
          ds, mc, tc, fs::path(g.out),
          [&](const StepRecord& r) {
            log_stream << exp_detail::loss_ndjson_line(r) << "\n";
            if (r.step % 50 == 0)
              progress("step " + std::to_string(r.step) + " l_rec=" + std::to_string(r.losses.l_rec));
          },
          std::move(resume), [](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
      progress("finished at step " + std::to_string(state.step) + "; checkpoint in " + g.out +
               "/ckpt");
    } else if (ev->parsed()) {
      auto ds = load_dataset(default_data_dir(ev_data));
      auto state = load_checkpoint<float>(ev_ckpt);
      Protocol p = Protocol::from_code(ev_protocol);
      p.same_view_exclusion = !ev_no_view_excl;
      p.clothing = clothing_filter_from_name(ev_clothing);
      auto report = evaluate(state.model, ds, p, ev_cmc_k, ev_l2);
      const auto j = report_to_json(report);
      if (!g.out.empty()) {
        write_text_file(g.out, j.dump(2) + "\n");
        progress("wrote " + g.out);
      }
      std::cout << j.dump(2) << "\n";
    } else if (em->parsed()) {
      require(!g.out.empty(), Errc::invalid_argument, "embed: missing --out");
      auto ds = load_dataset(default_data_dir(em_data));
      auto state = load_checkpoint<float>(em_ckpt);
      auto table = embed(state.model, ds, split_from_name(em_split),
                         modality_from_name(em_modality), em_l2);
      save_embeddings(g.out, table);
      progress("wrote " + std::to_string(table.size()) + " x " + std::to_string(table.dim()) +
               " embeddings to " + g.out);
    } else if (re->parsed()) {
      auto table = load_embeddings(re_embeddings);
      require(re_query >= 0 && re_query < table.size(), Errc::invalid_argument,
              "query-id " + std::to_string(re_query) + " outside [0, " +
                  std::to_string(table.size()) + ")");
      std::vector<char> excluded(static_cast<size_t>(table.size()), 0);
      excluded[static_cast<size_t>(re_query)] = 1;  // never return the query itself
      Tensor<float> q({table.dim()});
      std::copy_n(table.features.data() + re_query * table.dim(), table.dim(), q.data());
      auto order = retrieve(q, table.features, std::min<int64_t>(re_k, table.size() - 1), excluded);
      const auto& qm = table.rows[static_cast<size_t>(re_query)];
      std::cout << "query row " << re_query << ": identity " << qm.identity_id << " clothing "
                << qm.clothing_id << " view " << qm.view_id << " ("
                << modality_name(qm.modality) << ")\n";
      for (size_t rank = 0; rank < order.size(); ++rank) {
        const auto& m = table.rows[static_cast<size_t>(order[rank])];
        double dist = 0;
        const float* a = table.features.data() + re_query * table.dim();
        const float* b = table.features.data() + order[rank] * table.dim();
        for (int64_t j2 = 0; j2 < table.dim(); ++j2) {
          const double d = static_cast<double>(a[j2]) - b[j2];
          dist += d * d;
        }
        std::cout << rank + 1 << ". row " << order[rank] << " identity " << m.identity_id
                  << " clothing " << m.clothing_id << " view " << m.view_id << " dist "
                  << std::sqrt(dist) << (m.identity_id == qm.identity_id ? "  <-- match" : "")
                  << "\n";
      }
    } else if (run->parsed() || runb->parsed()) {
      require(!g.out.empty(), Errc::invalid_argument, "run: missing --out");
      auto cfg = load_config_with_overrides(g);
      auto summary = runb->parsed() ? run_baseline(cfg, g.out, progress)
                                    : run_experiment(cfg, g.out, progress);
      std::cout << comparison_table({summary}) << "\n";
      progress("summary written to " + g.out + "/summary.json");
    } else if (rep->parsed()) {
      std::vector<RunSummary> summaries;
      for (const auto& d : rep_dirs) summaries.push_back(load_summary(d));
      const auto table = comparison_table(summaries, rep_csv);
      if (!g.out.empty()) {
        write_text_file(g.out, table);
        progress("wrote " + g.out);
      }
      std::cout << table;
    }
  } catch (const Error& e) {
    std::cerr << e.tagged() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
