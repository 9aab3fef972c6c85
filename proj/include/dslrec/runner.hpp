#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dslrec/config.hpp"
#include "dslrec/data.hpp"
#include "dslrec/eval.hpp"
#include "dslrec/loss.hpp"
#include "dslrec/model.hpp"

namespace dslrec {

struct DiagnosticsRow {
  std::size_t batch = 0;
  LossSummary summary;
};

struct RunRecord {
  std::string run_id;
  ExperimentConfig config;
  std::vector<double> epoch_loss;            // mean per-example loss per epoch
  std::vector<double> batch_loss;            // batch totals in step order
  std::vector<double> validation_ndcg;       // per epoch, empty without validation
  std::size_t best_epoch = 0;                // 1-based; 0 when no epoch ran
  std::vector<MetricsReport> metrics;        // test metrics of the retained model
  std::vector<DiagnosticsRow> diagnostics;
  double wall_clock_seconds = 0.0;           // not persisted; varies run to run
  EmbeddingModel model;                      // best-validation (or final) model
};

/// Deterministic id derived from the resolved configuration.
std::string make_run_id(const ExperimentConfig& config);

DatasetSplits make_splits(const InteractionDataset& data, SplitKind kind, std::uint64_t seed);
DatasetSplits load_and_split(const ExperimentConfig& config);

/// Adam training with seeded shuffling and negative sampling. Throws on a
/// non-finite loss naming the batch and the configuration.
RunRecord train(const ExperimentConfig& config, const DatasetSplits& splits);
RunRecord train(const ExperimentConfig& config);

struct GridResult {
  std::vector<RunRecord> records;
  std::size_t best = 0;
};

/// Cartesian product over config.grid, selecting by validation NDCG@k; ties
/// go to the lexicographically smaller value tuple.
GridResult grid_search(const ExperimentConfig& config, const DatasetSplits& splits);

/// Expanded grid configurations in evaluation order.
std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& config);

/// SL, CA only, kappa only, full DSL with all other settings shared.
std::vector<ExperimentConfig> ablation_configs(const ExperimentConfig& config);
std::vector<RunRecord> run_ablation(const ExperimentConfig& config, const DatasetSplits& splits);

/// Validation NDCG@k used for model selection; test metrics when there is
/// no validation split.
double selection_score(const RunRecord& record);

/// Per-run directory: config.cfg, metrics.csv, epoch_loss.csv,
/// diagnostics.csv, checkpoint.bin (and split_manifest.tsv on request).
void write_run(const RunRecord& record, const std::filesystem::path& dir,
               const DatasetSplits* splits = nullptr);
RunRecord load_run(const std::filesystem::path& dir);

/// metrics.csv, epoch_loss.csv and improvement.csv in `dir`.
void report(const std::vector<RunRecord>& records, const std::filesystem::path& dir);

struct Improvement {
  std::string backbone;
  SplitKind split = SplitKind::IID;
  std::string metric;
  Bucket bucket;
  double sl = 0.0;
  double dsl = 0.0;
  double percent = 0.0;  // 100 (dsl - sl) / sl
};

/// Seed-averaged DSL vs SL comparison per (backbone, split kind), metric and
/// bucket.
std::vector<Improvement> improvements(const std::vector<RunRecord>& records);

/// Output root: $DSLREC_RUNS_DIR or "runs".
std::filesystem::path output_root();

}  // namespace dslrec
