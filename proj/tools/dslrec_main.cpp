#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

#include "dslrec/runner.hpp"
#include "dslrec/theory.hpp"

using namespace dslrec;

namespace {

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_' || c == '.') c = '-';
  }
  return "--" + key;
}

// Config flags shared by the experiment subcommands. Values are kept as
// strings and applied on top of the --config file after parsing.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "flat key=value configuration file");
    for (const auto& key : ExperimentConfig::keys()) {
      const std::string flag = key == "data" ? "--data" : flag_name(key);
      app->add_option(flag, values[key], "config key " + key);
    }
    for (const auto& key : ExperimentConfig::tunable_keys()) {
      app->add_option(flag_name("grid." + key), values["grid." + key],
                      "comma-separated grid for " + key);
    }
  }

  ExperimentConfig resolve(const CLI::App* app) const {
    ExperimentConfig c = config_file.empty() ? ExperimentConfig{} : load_config_file(config_file);
    for (const auto& key : ExperimentConfig::keys()) {
      if (app->count(key == "data" ? "--data" : flag_name(key)) > 0) c.set(key, values.at(key));
    }
    for (const auto& key : ExperimentConfig::tunable_keys()) {
      if (app->count(flag_name("grid." + key)) > 0) c.set("grid." + key, values.at("grid." + key));
    }
    c.validate();
    return c;
  }
};

void print_metrics(const RunRecord& r) {
  std::printf("%s  best_epoch=%zu  epochs=%zu  %.1fs\n", r.run_id.c_str(), r.best_epoch,
              r.epoch_loss.size(), r.wall_clock_seconds);
  for (const auto& m : r.metrics) {
    std::printf("  %-4s recall@%zu=%.6f ndcg@%zu=%.6f users=%zu\n", to_string(m.bucket).c_str(), m.k,
                m.recall_at_k, m.k, m.ndcg_at_k, m.users_evaluated);
  }
}

double all_ndcg(const RunRecord& r) {
  for (const auto& m : r.metrics) {
    if (m.bucket == Bucket::All) return m.ndcg_at_k;
  }
  return 0.0;
}

double all_recall(const RunRecord& r) {
  for (const auto& m : r.metrics) {
    if (m.bucket == Bucket::All) return m.recall_at_k;
  }
  return 0.0;
}

std::filesystem::path persist(const RunRecord& r, const DatasetSplits& splits) {
  const auto dir = output_root() / r.run_id;
  write_run(r, dir, &splits);
  return dir;
}

std::vector<std::filesystem::path> run_dirs_under(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  if (!std::filesystem::exists(root)) return dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "summary.csv")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dslrec: sampled-softmax recommender training and evaluation"};
  app.require_subcommand(1);

  ConfigFlags train_flags, grid_flags, ablate_flags;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train_flags.attach(train_cmd);
  auto* grid_cmd = app.add_subcommand("grid", "grid search over grid.* lists (IID only)");
  grid_flags.attach(grid_cmd);
  auto* ablate_cmd = app.add_subcommand("ablate", "SL, CA only, kappa only and full DSL");
  ablate_flags.attach(ablate_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "re-evaluate a stored run checkpoint");
  std::string eval_run;
  eval_cmd->add_option("run", eval_run, "run directory")->required();

  auto* theory_cmd = app.add_subcommand("verify-theory", "randomized checks of the loss identities");
  theory::SuiteOptions suite;
  theory_cmd->add_option("--variational-instances", suite.variational_instances);
  theory_cmd->add_option("--simplex-points", suite.simplex_points);
  theory_cmd->add_option("--smooth-max-instances", suite.smooth_max_instances);
  theory_cmd->add_option("--rho-instances", suite.rho_instances);
  theory_cmd->add_option("--dcg-catalogs", suite.dcg_catalogs);
  theory_cmd->add_option("--dcg-catalog-size", suite.dcg_catalog_size);
  theory_cmd->add_option("--seed", suite.seed);

  auto* report_cmd = app.add_subcommand("report", "aggregate run directories into CSV tables");
  std::vector<std::string> report_runs;
  std::string report_out = "report";
  report_cmd->add_option("runs", report_runs, "run directories (default: every run under the output root)");
  report_cmd->add_option("--out", report_out, "output directory");

  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic interaction file");
  SyntheticSpec spec;
  std::string synth_out;
  synth_cmd->add_option("out", synth_out, "output path")->required();
  synth_cmd->add_option("--users", spec.num_users);
  synth_cmd->add_option("--items", spec.num_items);
  synth_cmd->add_option("--clusters", spec.num_clusters);
  synth_cmd->add_option("--per-user", spec.interactions_per_user);
  synth_cmd->add_option("--popularity-exponent", spec.popularity_exponent);
  synth_cmd->add_option("--affinity", spec.affinity);
  synth_cmd->add_option("--seed", spec.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto config = train_flags.resolve(train_cmd);
      const auto splits = load_and_split(config);
      const auto record = train(config, splits);
      print_metrics(record);
      std::printf("wrote %s\n", persist(record, splits).string().c_str());
    } else if (*grid_cmd) {
      const auto config = grid_flags.resolve(grid_cmd);
      const auto splits = load_and_split(config);
      const auto result = grid_search(config, splits);
      for (std::size_t r = 0; r < result.records.size(); ++r) {
        const auto& rec = result.records[r];
        persist(rec, splits);
        std::printf("%s tau=%s beta=%s alpha=%s lr=%s wd=%s val_ndcg=%.6f%s\n", rec.run_id.c_str(),
                    format_double(rec.config.dsl.tau).c_str(),
                    format_double(rec.config.dsl.beta).c_str(),
                    format_double(rec.config.dsl.alpha).c_str(),
                    format_double(rec.config.learning_rate).c_str(),
                    format_double(rec.config.weight_decay).c_str(), selection_score(rec),
                    r == result.best ? "  *" : "");
      }
      const auto& best = result.records[result.best];
      const auto best_path = output_root() / ("best-" + make_run_id(config) + ".cfg");
      std::filesystem::create_directories(output_root());
      save_config_file(best.config, best_path);
      std::printf("best: %s (config %s)\n", best.run_id.c_str(), best_path.string().c_str());
    } else if (*ablate_cmd) {
      const auto config = ablate_flags.resolve(ablate_cmd);
      const auto splits = load_and_split(config);
      const auto records = run_ablation(config, splits);
      std::printf("%-16s %-6s %-6s %-12s %-12s\n", "loss", "kappa", "ca", "recall", "ndcg");
      for (const auto& r : records) {
        persist(r, splits);
        const auto d = r.config.effective_dsl();
        std::printf("%-16s %-6s %-6s %-12.6f %-12.6f\n", to_string(r.config.loss).c_str(),
                    d.kappa_enabled ? "on" : "off", d.ca_enabled ? "on" : "off", all_recall(r),
                    all_ndcg(r));
      }
    } else if (*eval_cmd) {
      auto record = load_run(eval_run);
      const auto splits = load_and_split(record.config);
      const BipartiteGraph graph(splits.train);
      const auto emb = effective_embeddings(record.model, graph);
      std::optional<PopularityBuckets> buckets;
      if (splits.train.num_items() >= 5) buckets = build_buckets(splits.train);
      record.metrics = evaluate(emb, record.model.norm_epsilon, splits,
                                buckets ? &*buckets : nullptr, record.config.eval_k,
                                EvalTarget::Test, true);
      print_metrics(record);
    } else if (*theory_cmd) {
      const auto reports = theory::run_suite(suite);
      bool ok = true;
      std::printf("%-44s %10s %14s %12s %s\n", "identity", "trials", "max_violation", "tolerance",
                  "result");
      for (const auto& r : reports) {
        std::printf("%-44s %10zu %14.3e %12.1e %s\n", r.name.c_str(), r.trials, r.max_violation,
                    r.tolerance, r.passed ? "PASS" : "FAIL");
        if (!r.passed && !r.counterexample.empty()) {
          std::printf("  counterexample: %s\n", r.counterexample.c_str());
        }
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    } else if (*report_cmd) {
      std::vector<std::filesystem::path> dirs(report_runs.begin(), report_runs.end());
      if (dirs.empty()) dirs = run_dirs_under(output_root());
      if (dirs.empty()) throw Error("no run directories to report");
      std::vector<RunRecord> records;
      for (const auto& d : dirs) records.push_back(load_run(d));
      report(records, report_out);
      for (const auto& imp : improvements(records)) {
        std::printf("%-10s %-4s %-7s %-5s sl=%.6f dsl=%.6f imp=%+.2f%%\n", imp.backbone.c_str(),
                    to_string(imp.split).c_str(), imp.metric.c_str(),
                    to_string(imp.bucket).c_str(), imp.sl, imp.dsl, imp.percent);
      }
      std::printf("wrote %s/{metrics,epoch_loss,improvement}.csv\n", report_out.c_str());
    } else if (*synth_cmd) {
      const auto data = make_synthetic(spec);
      write_interactions(data, synth_out);
      std::printf("wrote %zu interactions (%zu users, %zu items) to %s\n", data.size(),
                  data.num_users(), data.num_items(), synth_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
