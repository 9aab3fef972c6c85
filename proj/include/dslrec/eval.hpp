#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dslrec/data.hpp"
#include "dslrec/model.hpp"

namespace dslrec {

/// |top-k ∩ positives| / |positives|; nullopt when there are no positives.
/// `positives` must be sorted ascending.
std::optional<double> recall_at_k(std::span<const ItemId> ranked,
                                  std::span<const ItemId> positives, std::size_t k);

/// DCG over hits at 1-indexed positions p <= k with gain 1 / log2(1 + p),
/// normalised by the ideal DCG over min(k, |positives|) positions.
std::optional<double> ndcg_at_k(std::span<const ItemId> ranked,
                                std::span<const ItemId> positives, std::size_t k);

enum class EvalTarget { Test, Validation };
std::string to_string(EvalTarget target);

struct MetricsReport {
  double recall_at_k = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t k = 20;
  std::size_t users_evaluated = 0;
  Bucket bucket = Bucket::All;
  SplitKind split_kind = SplitKind::IID;
  EvalTarget target = EvalTarget::Test;
};

/// Macro-averaged metrics over users with a train positive and at least one
/// eligible held-out positive. Candidates exclude train positives, and for
/// the test target also validation positives. With buckets, one report per
/// bucket (All, Head, Tail); otherwise All only. Throws naming the bucket
/// when no user qualifies, unless `skip_empty` drops such buckets instead.
std::vector<MetricsReport> evaluate(const Embeddings& emb, double eps, const DatasetSplits& splits,
                                    const PopularityBuckets* buckets, std::size_t k,
                                    EvalTarget target = EvalTarget::Test, bool skip_empty = false);

}  // namespace dslrec
