#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dslrec/data.hpp"

using namespace dslrec;

namespace {

InteractionDataset parse(const std::string& text, HeaderMode header = HeaderMode::Auto) {
  std::istringstream in(text);
  return parse_interactions(in, Delimiter::Auto, header);
}

InteractionDataset random_dataset(std::size_t nu, std::size_t ni, std::size_t n,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<UserId> u(0, nu - 1);
  std::uniform_int_distribution<ItemId> i(0, ni - 1);
  std::vector<Interaction> pairs;
  for (std::size_t k = 0; k < n; ++k) pairs.push_back({u(rng), i(rng)});
  return InteractionDataset(nu, ni, pairs);
}

std::set<Interaction> as_set(const InteractionDataset& d) {
  return {d.interactions().begin(), d.interactions().end()};
}

double kl_to_uniform(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  const double u = 1.0 / static_cast<double>(counts.size());
  double kl = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    kl += p * std::log(p / u);
  }
  return kl;
}

}  // namespace

TEST_CASE("load: three lines with string tokens") {
  const auto d = parse("a\tx\na\ty\nb\tx\n");
  CHECK(d.num_users() == 2);
  CHECK(d.num_items() == 2);
  CHECK(d.size() == 3);
  CHECK(d.user_token(0) == "a");
  CHECK(d.item_token(1) == "y");
}

TEST_CASE("load: duplicate pair is dropped") {
  const auto d = parse("a,x\na,y\nb,x\na,x\n");
  CHECK(d.size() == 3);
}

TEST_CASE("load: header detection") {
  SUBCASE("numeric body") {
    const auto d = parse("user\titem\n1\t10\n1\t11\n2\t10\n");
    CHECK(d.size() == 3);
    CHECK(d.num_users() == 2);
    CHECK(d.user_token(0) == "1");
  }
  SUBCASE("forced") {
    CHECK(parse("u,i\na,x\nb,y\n", HeaderMode::Present).size() == 2);
    CHECK(parse("u,i\na,x\nb,y\n", HeaderMode::Absent).size() == 3);
  }
  SUBCASE("extra columns ignored") {
    const auto d = parse("1 5 4.0 99\n2 5 3.0 100\n");
    CHECK(d.size() == 2);
    CHECK(d.num_items() == 1);
  }
}

TEST_CASE("load: errors") {
  CHECK_THROWS_AS(parse(""), Error);
  try {
    parse("1\t2\n3\n4\t5\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
  CHECK_THROWS_AS(load_interactions("/nonexistent/file.tsv"), Error);
}

TEST_CASE("load: unique pair count matches a sort-unique oracle") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 299), i(0, 399);
  std::ostringstream text;
  std::vector<std::pair<int, int>> lines;
  for (int k = 0; k < 100000; ++k) {
    lines.emplace_back(u(rng), i(rng));
    text << "u" << lines.back().first << "\t" << lines.back().second << "\n";
  }
  std::sort(lines.begin(), lines.end());
  const auto unique = std::unique(lines.begin(), lines.end()) - lines.begin();
  const auto d = parse(text.str());
  CHECK(d.size() == static_cast<std::size_t>(unique));
}

TEST_CASE("dataset: positives group the interactions") {
  const auto d = random_dataset(20, 30, 200, 5);
  std::size_t total = 0;
  for (UserId u = 0; u < d.num_users(); ++u) {
    const auto p = d.positives(u);
    CHECK(std::is_sorted(p.begin(), p.end()));
    CHECK(std::adjacent_find(p.begin(), p.end()) == p.end());
    for (ItemId i : p) CHECK(d.contains(u, i));
    total += p.size();
  }
  CHECK(total == d.size());
  CHECK_THROWS_AS(InteractionDataset(2, 2, {{0, 2}}), Error);
}

TEST_CASE("split_iid: sizes, disjointness, determinism") {
  std::vector<Interaction> pairs;
  for (UserId u = 0; u < 20; ++u) {
    for (ItemId k = 0; k < 5; ++k) pairs.push_back({u, static_cast<ItemId>((u * 3 + k * 7) % 40)});
  }
  const InteractionDataset d(20, 40, pairs);
  REQUIRE(d.size() == 100);
  const auto s = split_iid(d, 11);
  REQUIRE(s.validation);
  CHECK(s.kind == SplitKind::IID);
  CHECK(s.test.size() == 20);
  CHECK(s.validation->size() == 8);
  CHECK(s.train.size() == 72);

  const auto again = split_iid(d, 11);
  CHECK(std::ranges::equal(s.train.interactions(), again.train.interactions()));
  CHECK(std::ranges::equal(s.test.interactions(), again.test.interactions()));

  CHECK_THROWS_AS(split_iid(random_dataset(3, 3, 5, 1), 1), Error);
}

TEST_CASE("split_iid: disjoint and exhaustive over 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto d = random_dataset(8, 12, 10 + seed % 40, seed);
    if (d.size() < 10) continue;
    const auto s = split_iid(d, seed);
    const auto tr = as_set(s.train), va = as_set(*s.validation), te = as_set(s.test);
    std::set<Interaction> all;
    for (const auto* part : {&tr, &va, &te}) {
      for (const auto& x : *part) CHECK(all.insert(x).second);
    }
    CHECK(all == as_set(d));
    CHECK(s.test.size() == test_size_for(d.size()));
  }
}

TEST_CASE("split_ood: flattens the test item histogram") {
  SyntheticSpec spec;
  spec.num_users = 300;
  spec.num_items = 200;
  spec.interactions_per_user = 30;
  spec.popularity_exponent = 1.2;
  spec.seed = 4;
  const auto d = make_synthetic(spec);
  const auto s = split_ood(d, 9);
  CHECK(s.kind == SplitKind::OOD);
  CHECK_FALSE(s.validation);
  CHECK(s.test.size() == test_size_for(d.size()));
  CHECK(s.train.size() + s.test.size() == d.size());
  CHECK(kl_to_uniform(s.test.item_counts()) < kl_to_uniform(s.train.item_counts()));

  std::set<Interaction> tr = as_set(s.train);
  for (const auto& x : s.test.interactions()) CHECK(tr.count(x) == 0);
}

TEST_CASE("split_ood: uniform popularity gives a test histogram like the iid split") {
  // Every item has the same count, so the weights are all equal.
  std::vector<Interaction> pairs;
  for (UserId u = 0; u < 100; ++u) {
    for (ItemId k = 0; k < 10; ++k) pairs.push_back({u, static_cast<ItemId>((u + k * 7) % 50)});
  }
  const InteractionDataset d(100, 50, pairs);
  const auto counts = d.item_counts();
  REQUIRE(std::all_of(counts.begin(), counts.end(), [&](auto c) { return c == counts[0]; }));
  const double ood = kl_to_uniform(split_ood(d, 2).test.item_counts());
  const double iid = kl_to_uniform(split_iid(d, 2).test.item_counts());
  CHECK(std::abs(ood - iid) < 0.05);
}

TEST_CASE("sample_negatives: forced outcome and contract") {
  std::vector<Interaction> pairs;
  for (ItemId i = 0; i < 9; ++i) {
    if (i != 4) pairs.push_back({0, i});
  }
  pairs.push_back({1, 0});
  const InteractionDataset d(2, 9, pairs);
  const std::vector<Interaction> pos{{0, 0}};
  const auto batch = sample_negatives(d, pos, 1, 7);
  CHECK(batch.negatives(0, 0) == 4);
  CHECK_THROWS_AS(sample_negatives(d, pos, 2, 7), Error);
  try {
    sample_negatives(d, pos, 2, 7);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("user") != std::string::npos);
  }

  const auto rd = random_dataset(20, 60, 300, 8);
  const std::vector<Interaction> rows(rd.interactions().begin(), rd.interactions().end());
  const auto b = sample_negatives(rd, rows, 25, 3);
  CHECK(b.size() == rows.size());
  CHECK(b.num_negatives() == 25);
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (std::size_t j = 0; j < 25; ++j) {
      CHECK_FALSE(rd.contains(rows[r].user, b.negatives(r, j)));
      CHECK(b.negatives(r, j) != rows[r].item);
    }
  }
  const auto again = sample_negatives(rd, rows, 25, 3);
  CHECK(again.negatives == b.negatives);
}

TEST_CASE("sample_negatives: uniform over the eligible items") {
  std::vector<Interaction> pairs{{0, 0}, {0, 1}, {0, 2}};
  const std::size_t ni = 50;
  const InteractionDataset d(1, ni, pairs);
  const std::size_t rows = 25000, per_row = 40, draws = rows * per_row;
  const auto b = sample_negatives(d, std::vector<Interaction>(rows, {0, 0}), per_row, 123);
  std::vector<double> counts(ni, 0.0);
  for (ItemId i : b.negatives.flat()) counts[i] += 1.0;
  for (ItemId i = 0; i < 3; ++i) CHECK(counts[i] == 0.0);
  const double eligible = static_cast<double>(ni - 3);
  const double expected = static_cast<double>(draws) / eligible;
  const double sigma = std::sqrt(expected * (1.0 - 1.0 / eligible));
  double chi2 = 0.0;
  for (std::size_t i = 3; i < ni; ++i) {
    CHECK(std::abs(counts[i] - expected) < 4.0 * sigma);
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  // 46 degrees of freedom: mean 46, sd about 9.6.
  CHECK(chi2 < 46.0 + 5.0 * std::sqrt(2.0 * 46.0));
}

TEST_CASE("build_buckets: ranking and ties") {
  SUBCASE("five distinct counts") {
    std::vector<Interaction> pairs;
    const std::size_t counts[] = {5, 9, 1, 7, 3};
    for (ItemId i = 0; i < 5; ++i) {
      for (UserId u = 0; u < counts[i]; ++u) pairs.push_back({u, i});
    }
    const auto b = build_buckets(InteractionDataset(10, 5, pairs));
    CHECK(b.head == std::vector<ItemId>{1});
    CHECK(b.tail == std::vector<ItemId>{2});
    CHECK(b.contains(Bucket::Head, 1));
    CHECK(b.contains(Bucket::All, 3));
    CHECK_FALSE(b.contains(Bucket::Tail, 1));
  }
  SUBCASE("tie at the boundary") {
    // Items 0..4 all have count 2: lower ids win both placements.
    std::vector<Interaction> pairs;
    for (ItemId i = 0; i < 5; ++i) pairs.insert(pairs.end(), {{0, i}, {1, i}});
    const auto b = build_buckets(InteractionDataset(2, 5, pairs));
    CHECK(b.head == std::vector<ItemId>{0});
    CHECK(b.tail == std::vector<ItemId>{1});
  }
  CHECK_THROWS_AS(build_buckets(InteractionDataset(1, 4, {{0, 0}})), Error);
}

TEST_CASE("build_buckets: matches a full-sort oracle") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto d = random_dataset(15, 5 + seed, 60, seed);
    const auto b = build_buckets(d);
    const auto counts = d.item_counts();
    const std::size_t n = d.num_items();
    const std::size_t q = (n + 4) / 5;
    std::vector<ItemId> ids(n);
    for (ItemId i = 0; i < n; ++i) ids[i] = i;
    auto by_desc = ids;
    std::sort(by_desc.begin(), by_desc.end(), [&](ItemId a, ItemId c) {
      return counts[a] != counts[c] ? counts[a] > counts[c] : a < c;
    });
    std::vector<ItemId> head(by_desc.begin(), by_desc.begin() + q);
    std::vector<ItemId> rest(by_desc.begin() + q, by_desc.end());
    std::sort(rest.begin(), rest.end(), [&](ItemId a, ItemId c) {
      return counts[a] != counts[c] ? counts[a] < counts[c] : a < c;
    });
    std::vector<ItemId> tail(rest.begin(), rest.begin() + q);
    std::sort(head.begin(), head.end());
    std::sort(tail.begin(), tail.end());
    CHECK(b.head == head);
    CHECK(b.tail == tail);
    for (ItemId h : b.head) {
      for (ItemId t : b.tail) CHECK(counts[h] >= counts[t]);
    }
    CHECK(build_buckets(d).head == b.head);
  }
}

TEST_CASE("synthetic data round-trips through a file; manifest lists every interaction") {
  SyntheticSpec spec;
  spec.num_users = 50;
  spec.num_items = 40;
  spec.interactions_per_user = 8;
  const auto d = make_synthetic(spec);
  CHECK(make_synthetic(spec).interactions().size() == d.size());
  const auto dir = std::filesystem::temp_directory_path() / "dslrec_test_data";
  std::filesystem::create_directories(dir);
  write_interactions(d, dir / "syn.tsv");
  const auto back = load_interactions(dir / "syn.tsv");
  CHECK(back.size() == d.size());

  const auto s = split_iid(d, 1);
  write_split_manifest(s, dir / "manifest.tsv");
  std::ifstream in(dir / "manifest.tsv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  CHECK(line == "user\titem\tsplit");
  while (std::getline(in, line)) ++rows;
  CHECK(rows == d.size());
  std::filesystem::remove_all(dir);
}
