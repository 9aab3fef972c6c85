#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dslrec/matrix.hpp"

namespace dslrec {

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct Interaction {
  UserId user;
  ItemId item;
  auto operator<=>(const Interaction&) const = default;
};

// Original tokens for the dense ids, shared by every split of one load.
struct IdMaps {
  std::vector<std::string> users;
  std::vector<std::string> items;
};

/// Implicit-feedback interaction set over dense user and item id spaces.
///
/// Immutable after construction. Interactions are unique and kept sorted by
/// (user, item), so the per-user positive lists are contiguous runs.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  /// Duplicates are dropped; ids outside the declared ranges throw.
  InteractionDataset(std::size_t num_users, std::size_t num_items,
                     std::vector<Interaction> pairs,
                     std::shared_ptr<const IdMaps> ids = nullptr);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t size() const { return interactions_.size(); }
  bool empty() const { return interactions_.empty(); }

  std::span<const Interaction> interactions() const { return interactions_; }
  /// Sorted ascending.
  std::span<const ItemId> positives(UserId u) const;
  bool contains(UserId u, ItemId i) const;

  /// Per-item interaction counts.
  std::vector<std::size_t> item_counts() const;

  const std::shared_ptr<const IdMaps>& id_maps() const { return ids_; }
  std::string user_token(UserId u) const;
  std::string item_token(ItemId i) const;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Interaction> interactions_;
  std::vector<std::size_t> user_offsets_;  // size num_users + 1
  std::vector<ItemId> items_;              // item column of interactions_
  std::shared_ptr<const IdMaps> ids_;
};

enum class Delimiter { Auto, Tab, Comma, Whitespace };
Delimiter parse_delimiter(const std::string& name);

enum class HeaderMode { Auto, Present, Absent };
HeaderMode parse_header_mode(const std::string& name);

/// Reads "user<sep>item[<sep>...]" lines. Extra columns are ignored. A first
/// line whose item column is non-numeric is treated as a header when the
/// following line's item column is numeric (HeaderMode::Auto).
InteractionDataset parse_interactions(std::istream& in, Delimiter delim = Delimiter::Auto,
                                      HeaderMode header = HeaderMode::Auto);
InteractionDataset load_interactions(const std::filesystem::path& path,
                                     Delimiter delim = Delimiter::Auto,
                                     HeaderMode header = HeaderMode::Auto);

enum class SplitKind { IID, OOD };
std::string to_string(SplitKind kind);
SplitKind parse_split_kind(const std::string& name);

struct DatasetSplits {
  InteractionDataset train;
  std::optional<InteractionDataset> validation;
  InteractionDataset test;
  SplitKind kind = SplitKind::IID;
};

/// Random 72/8/20 train/validation/test assignment of interactions.
DatasetSplits split_iid(const InteractionDataset& data, std::uint64_t seed);

/// 20% test set drawn without replacement with per-interaction weight
/// 1/count(item), flattening the test item histogram. No validation split.
DatasetSplits split_ood(const InteractionDataset& data, std::uint64_t seed);

std::size_t test_size_for(std::size_t total);

/// One "user<TAB>item<TAB>split" line per interaction, in (user, item) order.
void write_split_manifest(const DatasetSplits& splits, const std::filesystem::path& path);

struct TrainingBatch {
  std::vector<Interaction> positives;
  IdMatrix negatives;  // positives.size() x N

  std::size_t size() const { return positives.size(); }
  std::size_t num_negatives() const { return negatives.cols(); }
};

/// Uniform draws from I \ P_u by rejection. Rows are independent; items may
/// repeat within a row.
TrainingBatch sample_negatives(const InteractionDataset& train,
                               std::span<const Interaction> positives,
                               std::size_t num_negatives, std::uint64_t seed);

enum class Bucket { All, Head, Tail };
std::string to_string(Bucket bucket);

struct PopularityBuckets {
  std::vector<ItemId> head;  // sorted ascending
  std::vector<ItemId> tail;  // sorted ascending
  std::vector<std::size_t> counts;

  bool contains(Bucket bucket, ItemId item) const;
};

/// Head: top ceil(0.2 n) items by (count desc, id asc). Tail: ceil(0.2 n)
/// of the remaining items by (count asc, id asc).
PopularityBuckets build_buckets(const InteractionDataset& train);

struct SyntheticSpec {
  std::size_t num_users = 600;
  std::size_t num_items = 500;
  std::size_t num_clusters = 10;
  std::size_t interactions_per_user = 40;
  double popularity_exponent = 1.0;  // Zipf exponent of the item prior
  double affinity = 4.0;             // strength of the cluster preference
  std::uint64_t seed = 1;
};

/// Clustered latent-taste generator with a Zipf item prior. Tokens are the
/// decimal ids.
InteractionDataset make_synthetic(const SyntheticSpec& spec);

void write_interactions(const InteractionDataset& data, const std::filesystem::path& path);

}  // namespace dslrec
