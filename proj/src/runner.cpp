#include "dslrec/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "dslrec/optim.hpp"

namespace dslrec {

std::string make_run_id(const ExperimentConfig& config) {
  // FNV-1a over the resolved configuration.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return to_string(config.loss) + "-" + config.backbone.name() + "-" + to_string(config.split) +
         "-s" + std::to_string(config.seed) + "-" + std::string(hex, 10);
}

DatasetSplits make_splits(const InteractionDataset& data, SplitKind kind, std::uint64_t seed) {
  return kind == SplitKind::IID ? split_iid(data, seed) : split_ood(data, seed);
}

DatasetSplits load_and_split(const ExperimentConfig& config) {
  if (config.data_path.empty()) throw Error("no data path configured (--data)");
  const auto data = load_interactions(config.data_path, parse_delimiter(config.delimiter),
                                      parse_header_mode(config.header));
  return make_splits(data, config.split, config.split_seed);
}

namespace {

LossOutput batch_loss(const ExperimentConfig& config, const Embeddings& emb,
                      const TrainingBatch& batch, const Matrix& scores, double eps) {
  switch (config.loss) {
    case LossKind::BPR: return bpr_loss(scores);
    case LossKind::SL: return softmax_loss(scores, config.dsl.tau);
    default: break;
  }
  std::vector<ItemId> pos(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) pos[b] = batch.positives[b].item;
  const auto sims = item_similarity(emb, pos, batch.negatives, eps);
  return dsl_loss(scores, sims, config.effective_dsl(), &batch.negatives);
}

std::vector<MetricsReport> final_metrics(const EmbeddingModel& model, const BipartiteGraph& graph,
                                         const DatasetSplits& splits, std::size_t k) {
  const auto emb = effective_embeddings(model, graph);
  std::optional<PopularityBuckets> buckets;
  if (splits.train.num_items() >= 5) buckets = build_buckets(splits.train);
  return evaluate(emb, model.norm_epsilon, splits, buckets ? &*buckets : nullptr, k,
                  EvalTarget::Test, true);
}

}  // namespace

RunRecord train(const ExperimentConfig& config, const DatasetSplits& splits) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const InteractionDataset& train_set = splits.train;
  if (train_set.empty()) throw Error("training split is empty");

  RunRecord rec;
  rec.config = config;
  rec.run_id = make_run_id(config);

  EmbeddingModel model = init_embeddings(train_set.num_users(), train_set.num_items(), config.dim,
                                         config.seed, config.backbone);
  const BipartiteGraph graph(train_set);
  const Adam adam({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  AdamState user_state, item_state;

  std::vector<Interaction> order(train_set.interactions().begin(), train_set.interactions().end());
  const std::size_t N = config.negatives;
  std::vector<UserId> users;
  IdMatrix items;

  EmbeddingModel best = model;
  double best_score = -1.0;
  std::size_t since_best = 0;
  std::size_t global_batch = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5f0000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_total = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++global_batch) {
      const std::size_t B = std::min(config.batch_size, order.size() - start);
      const std::span<const Interaction> slice(order.data() + start, B);
      const auto batch = sample_negatives(train_set, slice, N,
                                          mix_seed(config.seed, 0xba7c000000ULL + global_batch));

      const auto emb = effective_embeddings(model, graph);
      users.resize(B);
      items = IdMatrix(B, N + 1);
      for (std::size_t b = 0; b < B; ++b) {
        users[b] = batch.positives[b].user;
        items(b, 0) = batch.positives[b].item;
        for (std::size_t j = 0; j < N; ++j) items(b, j + 1) = batch.negatives(b, j);
      }
      const Matrix scores = score(emb, users, items, model.norm_epsilon);
      const LossOutput out = batch_loss(config, emb, batch, scores, model.norm_epsilon);
      if (!std::isfinite(out.total)) {
        throw Error("non-finite loss at batch " + std::to_string(global_batch) + " (epoch " +
                    std::to_string(epoch) + ") for config:\n" + config.serialize());
      }
      rec.batch_loss.push_back(out.total);
      epoch_total += out.total;
      if (global_batch % config.log_interval == 0) {
        rec.diagnostics.push_back({global_batch, summarize(out)});
      }

      auto grad = score_backward(emb, users, items, out.grad_wrt_scores, model.norm_epsilon);
      grad = backprop_embeddings(model, graph, std::move(grad));
      adam.step(model.users.flat(), grad.users.flat(), user_state);
      adam.step(model.items.flat(), grad.items.flat(), item_state);
    }
    rec.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));

    if (splits.validation && !splits.validation->empty()) {
      const auto emb = effective_embeddings(model, graph);
      const auto reports = evaluate(emb, model.norm_epsilon, splits, nullptr, config.eval_k,
                                    EvalTarget::Validation, true);
      const double ndcg = reports.empty() ? 0.0 : reports.front().ndcg_at_k;
      rec.validation_ndcg.push_back(ndcg);
      if (ndcg > best_score) {
        best_score = ndcg;
        best = model;
        rec.best_epoch = epoch;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        break;
      }
    } else {
      best = model;
      rec.best_epoch = epoch;
    }
  }

  rec.model = std::move(best);
  rec.metrics = final_metrics(rec.model, graph, splits, config.eval_k);
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

RunRecord train(const ExperimentConfig& config) { return train(config, load_and_split(config)); }

std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& config) {
  std::vector<ExperimentConfig> cells{config};
  cells.front().grid.clear();
  // std::map keeps keys sorted, which fixes the tie-break order.
  for (const auto& [key, values] : config.grid) {
    std::vector<ExperimentConfig> next;
    for (const auto& cell : cells) {
      for (double v : values) {
        ExperimentConfig c = cell;
        c.set(key, format_double(v));
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

double selection_score(const RunRecord& record) {
  if (!record.validation_ndcg.empty()) {
    return *std::max_element(record.validation_ndcg.begin(), record.validation_ndcg.end());
  }
  for (const auto& m : record.metrics) {
    if (m.bucket == Bucket::All) return m.ndcg_at_k;
  }
  return 0.0;
}

namespace {

double tunable_value(const ExperimentConfig& c, const std::string& key) {
  if (key == "alpha") return c.dsl.alpha;
  if (key == "beta") return c.dsl.beta;
  if (key == "learning_rate") return c.learning_rate;
  if (key == "tau") return c.dsl.tau;
  if (key == "weight_decay") return c.weight_decay;
  throw Error("not a tunable key: " + key);
}

}  // namespace

GridResult grid_search(const ExperimentConfig& config, const DatasetSplits& splits) {
  if (splits.kind == SplitKind::OOD || !splits.validation) {
    throw Error("grid search needs a validation split; OOD splits have none");
  }
  GridResult result;
  const auto cells = expand_grid(config);
  std::vector<std::vector<double>> tuples;
  for (const auto& cell : cells) {
    result.records.push_back(train(cell, splits));
    std::vector<double> t;
    for (const auto& [key, values] : config.grid) t.push_back(tunable_value(cell, key));
    tuples.push_back(std::move(t));
  }
  for (std::size_t r = 1; r < result.records.size(); ++r) {
    const double s = selection_score(result.records[r]);
    const double best = selection_score(result.records[result.best]);
    if (s > best || (s == best && tuples[r] < tuples[result.best])) result.best = r;
  }
  return result;
}

std::vector<ExperimentConfig> ablation_configs(const ExperimentConfig& config) {
  std::vector<ExperimentConfig> out;
  for (auto kind : {LossKind::SL, LossKind::DSLCAOnly, LossKind::DSLKappaOnly, LossKind::DSL}) {
    ExperimentConfig c = config;
    c.loss = kind;
    c.grid.clear();
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RunRecord> run_ablation(const ExperimentConfig& config, const DatasetSplits& splits) {
  std::vector<RunRecord> out;
  for (const auto& c : ablation_configs(config)) out.push_back(train(c, splits));
  return out;
}

std::filesystem::path output_root() {
  if (const char* env = std::getenv("DSLREC_RUNS_DIR"); env && *env) return env;
  return "runs";
}

}  // namespace dslrec
