#include "dslrec/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace dslrec {

InteractionDataset::InteractionDataset(std::size_t num_users, std::size_t num_items,
                                       std::vector<Interaction> pairs,
                                       std::shared_ptr<const IdMaps> ids)
    : num_users_(num_users), num_items_(num_items), interactions_(std::move(pairs)),
      ids_(std::move(ids)) {
  for (const auto& p : interactions_) {
    if (p.user >= num_users_ || p.item >= num_items_) {
      throw Error("interaction (" + std::to_string(p.user) + ", " + std::to_string(p.item) +
                  ") outside id space " + std::to_string(num_users_) + "x" +
                  std::to_string(num_items_));
    }
  }
  std::sort(interactions_.begin(), interactions_.end());
  interactions_.erase(std::unique(interactions_.begin(), interactions_.end()),
                      interactions_.end());

  user_offsets_.assign(num_users_ + 1, 0);
  items_.reserve(interactions_.size());
  for (const auto& p : interactions_) {
    ++user_offsets_[p.user + 1];
    items_.push_back(p.item);
  }
  std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
}

std::span<const ItemId> InteractionDataset::positives(UserId u) const {
  assert(u < num_users_);
  return std::span<const ItemId>(items_).subspan(user_offsets_[u],
                                                 user_offsets_[u + 1] - user_offsets_[u]);
}

bool InteractionDataset::contains(UserId u, ItemId i) const {
  const auto pos = positives(u);
  return std::binary_search(pos.begin(), pos.end(), i);
}

std::vector<std::size_t> InteractionDataset::item_counts() const {
  std::vector<std::size_t> counts(num_items_, 0);
  for (ItemId i : items_) ++counts[i];
  return counts;
}

std::string InteractionDataset::user_token(UserId u) const {
  if (ids_ && u < ids_->users.size()) return ids_->users[u];
  return std::to_string(u);
}

std::string InteractionDataset::item_token(ItemId i) const {
  if (ids_ && i < ids_->items.size()) return ids_->items[i];
  return std::to_string(i);
}

Delimiter parse_delimiter(const std::string& name) {
  if (name == "auto") return Delimiter::Auto;
  if (name == "tab" || name == "\t") return Delimiter::Tab;
  if (name == "comma" || name == ",") return Delimiter::Comma;
  if (name == "space" || name == "whitespace") return Delimiter::Whitespace;
  throw Error("unknown delimiter '" + name + "' (expected auto, tab, comma, whitespace)");
}

HeaderMode parse_header_mode(const std::string& name) {
  if (name == "auto") return HeaderMode::Auto;
  if (name == "yes" || name == "present") return HeaderMode::Present;
  if (name == "no" || name == "absent") return HeaderMode::Absent;
  throw Error("unknown header mode '" + name + "' (expected auto, yes, no)");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t' ||
                        s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

Delimiter detect(std::string_view line) {
  if (line.find('\t') != std::string_view::npos) return Delimiter::Tab;
  if (line.find(',') != std::string_view::npos) return Delimiter::Comma;
  return Delimiter::Whitespace;
}

// First two fields of a line, or nullopt when fewer than two are present.
std::optional<std::pair<std::string, std::string>> split_fields(std::string_view line,
                                                                Delimiter delim) {
  std::vector<std::string_view> fields;
  if (delim == Delimiter::Whitespace) {
    std::size_t p = 0;
    while (p < line.size() && fields.size() < 2) {
      while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
      std::size_t q = p;
      while (q < line.size() && !std::isspace(static_cast<unsigned char>(line[q]))) ++q;
      if (q > p) fields.push_back(line.substr(p, q - p));
      p = q;
    }
  } else {
    const char sep = delim == Delimiter::Tab ? '\t' : ',';
    std::size_t p = 0;
    while (fields.size() < 2) {
      const std::size_t q = line.find(sep, p);
      fields.push_back(trim(line.substr(p, q == std::string_view::npos ? line.size() - p : q - p)));
      if (q == std::string_view::npos) break;
      p = q + 1;
    }
  }
  if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) return std::nullopt;
  return std::pair{std::string(fields[0]), std::string(fields[1])};
}

bool is_numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

InteractionDataset parse_interactions(std::istream& in, Delimiter delim, HeaderMode header) {
  struct Row {
    std::string user, item;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    if (delim == Delimiter::Auto) delim = detect(body);
    auto fields = split_fields(body, delim);
    if (!fields) throw ParseError("expected at least two columns (user, item)", line_no);
    rows.push_back({std::move(fields->first), std::move(fields->second), line_no});
  }
  if (rows.empty()) throw Error("interaction file is empty");

  const bool has_header =
      header == HeaderMode::Present ||
      (header == HeaderMode::Auto && !is_numeric(rows[0].item) &&
       (rows.size() == 1 || is_numeric(rows[1].item)));
  if (has_header) {
    rows.erase(rows.begin());
    if (rows.empty()) throw Error("interaction file has a header but no data");
  }

  auto maps = std::make_shared<IdMaps>();
  std::unordered_map<std::string, UserId> user_ids;
  std::unordered_map<std::string, ItemId> item_ids;
  std::vector<Interaction> pairs;
  pairs.reserve(rows.size());
  for (auto& r : rows) {
    auto [uit, unew] = user_ids.try_emplace(r.user, static_cast<UserId>(maps->users.size()));
    if (unew) maps->users.push_back(r.user);
    auto [iit, inew] = item_ids.try_emplace(r.item, static_cast<ItemId>(maps->items.size()));
    if (inew) maps->items.push_back(r.item);
    pairs.push_back({uit->second, iit->second});
  }
  const std::size_t nu = maps->users.size();
  const std::size_t ni = maps->items.size();
  return InteractionDataset(nu, ni, std::move(pairs), std::move(maps));
}

InteractionDataset load_interactions(const std::filesystem::path& path, Delimiter delim,
                                     HeaderMode header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interaction file " + path.string());
  return parse_interactions(in, delim, header);
}

std::string to_string(SplitKind kind) { return kind == SplitKind::IID ? "iid" : "ood"; }

SplitKind parse_split_kind(const std::string& name) {
  if (name == "iid" || name == "IID") return SplitKind::IID;
  if (name == "ood" || name == "OOD") return SplitKind::OOD;
  throw Error("unknown split kind '" + name + "' (expected iid or ood)");
}

std::size_t test_size_for(std::size_t total) {
  return static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(total)));
}

namespace {

InteractionDataset subset(const InteractionDataset& data, std::vector<Interaction> pairs) {
  return InteractionDataset(data.num_users(), data.num_items(), std::move(pairs), data.id_maps());
}

void require_min_size(const InteractionDataset& data) {
  if (data.size() < 10) {
    throw Error("splitting needs at least 10 interactions, got " + std::to_string(data.size()));
  }
}

}  // namespace

DatasetSplits split_iid(const InteractionDataset& data, std::uint64_t seed) {
  require_min_size(data);
  std::vector<Interaction> all(data.interactions().begin(), data.interactions().end());
  std::mt19937_64 rng(mix_seed(seed, 0x11d));
  std::shuffle(all.begin(), all.end(), rng);

  const std::size_t n_test = test_size_for(all.size());
  const std::size_t n_rest = all.size() - n_test;
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n_rest)));

  DatasetSplits s;
  s.kind = SplitKind::IID;
  s.test = subset(data, {all.begin(), all.begin() + n_test});
  s.validation = subset(data, {all.begin() + n_test, all.begin() + n_test + n_val});
  s.train = subset(data, {all.begin() + n_test + n_val, all.end()});
  return s;
}

DatasetSplits split_ood(const InteractionDataset& data, std::uint64_t seed) {
  require_min_size(data);
  const auto counts = data.item_counts();
  const auto all = data.interactions();
  std::mt19937_64 rng(mix_seed(seed, 0x00d));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Efraimidis-Spirakis: key = log(u) / w, take the largest keys.
  std::vector<std::pair<double, std::size_t>> keys(all.size());
  for (std::size_t k = 0; k < all.size(); ++k) {
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double w = 1.0 / static_cast<double>(counts[all[k].item]);
    keys[k] = {std::log(u) / w, k};
  }
  const std::size_t n_test = test_size_for(all.size());
  std::partial_sort(keys.begin(), keys.begin() + n_test, keys.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<char> in_test(all.size(), 0);
  for (std::size_t k = 0; k < n_test; ++k) in_test[keys[k].second] = 1;

  std::vector<Interaction> train, test;
  for (std::size_t k = 0; k < all.size(); ++k) (in_test[k] ? test : train).push_back(all[k]);

  DatasetSplits s;
  s.kind = SplitKind::OOD;
  s.train = subset(data, std::move(train));
  s.test = subset(data, std::move(test));
  return s;
}

void write_split_manifest(const DatasetSplits& splits, const std::filesystem::path& path) {
  std::vector<std::pair<Interaction, const char*>> rows;
  for (const auto& p : splits.train.interactions()) rows.push_back({p, "train"});
  if (splits.validation) {
    for (const auto& p : splits.validation->interactions()) rows.push_back({p, "validation"});
  }
  for (const auto& p : splits.test.interactions()) rows.push_back({p, "test"});
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::ofstream out(path);
  if (!out) throw Error("cannot write split manifest " + path.string());
  out << "user\titem\tsplit\n";
  for (const auto& [p, tag] : rows) {
    out << splits.train.user_token(p.user) << '\t' << splits.train.item_token(p.item) << '\t'
        << tag << '\n';
  }
}

TrainingBatch sample_negatives(const InteractionDataset& train,
                               std::span<const Interaction> positives,
                               std::size_t num_negatives, std::uint64_t seed) {
  TrainingBatch batch;
  batch.positives.assign(positives.begin(), positives.end());
  batch.negatives = IdMatrix(positives.size(), num_negatives);
  if (train.num_items() == 0) throw Error("cannot sample negatives from an empty catalog");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(train.num_items() - 1));
  for (std::size_t b = 0; b < positives.size(); ++b) {
    const auto [u, i] = positives[b];
    const auto pos = train.positives(u);
    const bool pos_in_train = std::binary_search(pos.begin(), pos.end(), i);
    const std::size_t excluded = pos.size() + (pos_in_train ? 0 : 1);
    if (train.num_items() < excluded + num_negatives) {
      throw Error("user " + train.user_token(u) + " has only " +
                  std::to_string(train.num_items() - std::min(excluded, train.num_items())) +
                  " eligible negatives, " + std::to_string(num_negatives) + " requested");
    }
    auto row = batch.negatives.row(b);
    for (std::size_t n = 0; n < num_negatives;) {
      const ItemId j = pick(rng);
      if (j == i || std::binary_search(pos.begin(), pos.end(), j)) continue;
      row[n++] = j;
    }
  }
  return batch;
}

std::string to_string(Bucket bucket) {
  switch (bucket) {
    case Bucket::All: return "all";
    case Bucket::Head: return "head";
    case Bucket::Tail: return "tail";
  }
  return "?";
}

bool PopularityBuckets::contains(Bucket bucket, ItemId item) const {
  switch (bucket) {
    case Bucket::All: return true;
    case Bucket::Head: return std::binary_search(head.begin(), head.end(), item);
    case Bucket::Tail: return std::binary_search(tail.begin(), tail.end(), item);
  }
  return false;
}

PopularityBuckets build_buckets(const InteractionDataset& train) {
  const std::size_t n = train.num_items();
  if (n < 5) throw Error("popularity buckets need at least 5 items");
  PopularityBuckets b;
  b.counts = train.item_counts();
  const auto share = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(n)));

  std::vector<ItemId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](ItemId a, ItemId c) {
    return b.counts[a] != b.counts[c] ? b.counts[a] > b.counts[c] : a < c;
  });
  b.head.assign(order.begin(), order.begin() + share);

  // Ascending pass over the remaining items so ties favour the lower id here too.
  std::vector<ItemId> rest(order.begin() + share, order.end());
  std::sort(rest.begin(), rest.end(), [&](ItemId a, ItemId c) {
    return b.counts[a] != b.counts[c] ? b.counts[a] < b.counts[c] : a < c;
  });
  b.tail.assign(rest.begin(), rest.begin() + share);

  std::sort(b.head.begin(), b.head.end());
  std::sort(b.tail.begin(), b.tail.end());
  return b;
}

InteractionDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_users == 0 || spec.num_items == 0 || spec.num_clusters == 0) {
    throw Error("synthetic data needs positive users, items and clusters");
  }
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5e));
  std::uniform_int_distribution<std::size_t> cluster_of(0, spec.num_clusters - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Items get a primary cluster; popularity follows a Zipf law over a random
  // permutation so popularity is independent of cluster.
  std::vector<std::size_t> item_cluster(spec.num_items);
  for (auto& c : item_cluster) c = cluster_of(rng);
  std::vector<std::size_t> rank(spec.num_items);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> log_prior(spec.num_items);
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    log_prior[i] = -spec.popularity_exponent * std::log(static_cast<double>(rank[i] + 1));
  }

  auto maps = std::make_shared<IdMaps>();
  for (std::size_t u = 0; u < spec.num_users; ++u) maps->users.push_back(std::to_string(u));
  for (std::size_t i = 0; i < spec.num_items; ++i) maps->items.push_back(std::to_string(i));

  const std::size_t per_user = std::min(spec.interactions_per_user, spec.num_items);
  std::uniform_int_distribution<std::size_t> count_of(std::max<std::size_t>(1, per_user / 2),
                                                      std::max<std::size_t>(1, per_user * 3 / 2));
  std::vector<Interaction> pairs;
  std::vector<std::pair<double, ItemId>> keys(spec.num_items);
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    // Each user mixes a main and a secondary taste cluster.
    const std::size_t main_c = cluster_of(rng);
    const std::size_t side_c = cluster_of(rng);
    for (std::size_t i = 0; i < spec.num_items; ++i) {
      double affinity = 0.0;
      if (item_cluster[i] == main_c) affinity = spec.affinity;
      else if (item_cluster[i] == side_c) affinity = 0.5 * spec.affinity;
      double g = unif(rng);
      while (g <= 0.0) g = unif(rng);
      // Gumbel-top-k sampling without replacement.
      keys[i] = {log_prior[i] + affinity - std::log(-std::log(g)), static_cast<ItemId>(i)};
    }
    const std::size_t n = std::min(count_of(rng), spec.num_items);
    std::partial_sort(keys.begin(), keys.begin() + n, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; k < n; ++k) pairs.push_back({static_cast<UserId>(u), keys[k].second});
  }
  return InteractionDataset(spec.num_users, spec.num_items, std::move(pairs), std::move(maps));
}

void write_interactions(const InteractionDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "user\titem\n";
  for (const auto& p : data.interactions()) {
    out << data.user_token(p.user) << '\t' << data.item_token(p.item) << '\n';
  }
}

}  // namespace dslrec
