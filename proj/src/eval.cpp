#include "dslrec/eval.hpp"

#include <algorithm>
#include <cmath>

namespace dslrec {

namespace {

bool has(std::span<const ItemId> sorted, ItemId i) {
  return std::binary_search(sorted.begin(), sorted.end(), i);
}

}  // namespace

std::optional<double> recall_at_k(std::span<const ItemId> ranked,
                                  std::span<const ItemId> positives, std::size_t k) {
  if (positives.empty()) return std::nullopt;
  if (k < 1) throw Error("k must be at least 1");
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t p = 0; p < depth; ++p) hits += has(positives, ranked[p]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(positives.size());
}

std::optional<double> ndcg_at_k(std::span<const ItemId> ranked,
                                std::span<const ItemId> positives, std::size_t k) {
  if (positives.empty()) return std::nullopt;
  if (k < 1) throw Error("k must be at least 1");
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t p = 0; p < depth; ++p) {
    if (has(positives, ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, positives.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

std::string to_string(EvalTarget target) {
  return target == EvalTarget::Test ? "test" : "validation";
}

std::vector<MetricsReport> evaluate(const Embeddings& emb, double eps, const DatasetSplits& splits,
                                    const PopularityBuckets* buckets, std::size_t k,
                                    EvalTarget target, bool skip_empty) {
  if (k < 1) throw Error("k must be at least 1");
  if (target == EvalTarget::Validation && !splits.validation) {
    throw Error("validation evaluation requested but the split has no validation set");
  }
  const InteractionDataset& held_out =
      target == EvalTarget::Test ? splits.test : *splits.validation;
  const InteractionDataset* also_excluded =
      target == EvalTarget::Test && splits.validation ? &*splits.validation : nullptr;

  std::vector<Bucket> kinds{Bucket::All};
  if (buckets) {
    kinds.push_back(Bucket::Head);
    kinds.push_back(Bucket::Tail);
  }
  struct Acc {
    double recall = 0.0, ndcg = 0.0;
    std::size_t users = 0;
  };
  std::vector<Acc> acc(kinds.size());

  const std::size_t ni = splits.train.num_items();
  std::vector<char> excluded(ni, 0);
  std::vector<ItemId> eligible;
  for (std::size_t u = 0; u < splits.train.num_users(); ++u) {
    const auto uid = static_cast<UserId>(u);
    const auto train_pos = splits.train.positives(uid);
    const auto test_pos = held_out.positives(uid);
    if (train_pos.empty() || test_pos.empty()) continue;

    for (ItemId i : train_pos) excluded[i] = 1;
    if (also_excluded) {
      for (ItemId i : also_excluded->positives(uid)) excluded[i] = 1;
    }
    const auto ranked = top_k_items(emb, uid, excluded, k, eps);
    for (ItemId i : train_pos) excluded[i] = 0;
    if (also_excluded) {
      for (ItemId i : also_excluded->positives(uid)) excluded[i] = 0;
    }

    for (std::size_t b = 0; b < kinds.size(); ++b) {
      eligible.clear();
      for (ItemId i : test_pos) {
        if (!buckets || buckets->contains(kinds[b], i)) eligible.push_back(i);
      }
      const auto r = recall_at_k(ranked, eligible, k);
      if (!r) continue;
      acc[b].recall += *r;
      acc[b].ndcg += *ndcg_at_k(ranked, eligible, k);
      ++acc[b].users;
    }
  }

  std::vector<MetricsReport> out;
  for (std::size_t b = 0; b < kinds.size(); ++b) {
    if (acc[b].users == 0) {
      if (skip_empty) continue;
      throw Error("no users with an eligible " + to_string(target) + " positive in bucket '" +
                  to_string(kinds[b]) + "'");
    }
    MetricsReport r;
    r.recall_at_k = acc[b].recall / static_cast<double>(acc[b].users);
    r.ndcg_at_k = acc[b].ndcg / static_cast<double>(acc[b].users);
    r.k = k;
    r.users_evaluated = acc[b].users;
    r.bucket = kinds[b];
    r.split_kind = splits.kind;
    r.target = target;
    out.push_back(r);
  }
  return out;
}

}  // namespace dslrec
