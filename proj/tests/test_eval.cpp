#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dslrec/eval.hpp"
#include "eval_oracle.hpp"

using namespace dslrec;

TEST_CASE("recall and ndcg: closed-form cases") {
  const std::vector<ItemId> ranked{4, 2, 9, 7, 1};
  const std::vector<ItemId> first{4};
  CHECK(*recall_at_k(ranked, first, 20) == 1.0);
  CHECK(*ndcg_at_k(ranked, first, 20) == 1.0);
  const std::vector<ItemId> third{9};
  CHECK(*ndcg_at_k(ranked, third, 3) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(*recall_at_k(ranked, third, 2) == 0.0);
  CHECK(*ndcg_at_k(ranked, third, 2) == 0.0);
  CHECK_FALSE(recall_at_k(ranked, {}, 5).has_value());
  CHECK_FALSE(ndcg_at_k(ranked, {}, 5).has_value());
  CHECK_THROWS_AS(recall_at_k(ranked, first, 0), Error);
  // Uncapped denominator: 3 positives, k = 2, both top slots hit.
  const std::vector<ItemId> many{2, 4, 7};
  CHECK(*recall_at_k(ranked, many, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(*ndcg_at_k(ranked, many, 2) == doctest::Approx(1.0));
}

TEST_CASE("recall and ndcg: random instances against set and position-sum oracles") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    std::vector<ItemId> ranked(40);
    for (ItemId i = 0; i < 40; ++i) ranked[i] = i;
    std::shuffle(ranked.begin(), ranked.end(), rng);
    std::set<ItemId> pos;
    std::uniform_int_distribution<ItemId> pick(0, 49);
    const int npos = 1 + t % 7;
    while (static_cast<int>(pos.size()) < npos) pos.insert(pick(rng));
    const std::vector<ItemId> sorted(pos.begin(), pos.end());
    const std::size_t k = 1 + t % 25;
    const auto o = eval_oracle::user_metrics(ranked, sorted, k);
    CHECK(std::abs(*recall_at_k(ranked, sorted, k) - o.recall) <= 1e-12);
    CHECK(std::abs(*ndcg_at_k(ranked, sorted, k) - o.ndcg) <= 1e-12);
    CHECK(*ndcg_at_k(ranked, sorted, k) <= 1.0);
  }
}

TEST_CASE("ndcg is invariant to order below k and equals 1 only for a perfect head") {
  std::vector<ItemId> a{1, 5, 2, 3, 4, 6, 7};
  std::vector<ItemId> b{1, 5, 2, 7, 6, 4, 3};
  const std::vector<ItemId> pos{1, 3, 5};
  CHECK(*ndcg_at_k(a, pos, 3) == *ndcg_at_k(b, pos, 3));
  std::vector<ItemId> perfect{5, 3, 1, 0, 2};
  CHECK(*ndcg_at_k(perfect, pos, 3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*ndcg_at_k(a, pos, 3) < 1.0);
}

TEST_CASE("evaluate: brute-force oracle on random tiny datasets") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = eval_oracle::random_case(seed);
    const auto buckets = build_buckets(inst.splits.train);
    for (auto target : {EvalTarget::Test, EvalTarget::Validation}) {
      const auto got = evaluate(inst.emb, 1e-12, inst.splits, &buckets, inst.k, target, true);
      for (const auto& r : got) {
        const auto want = eval_oracle::brute_force(inst, &buckets, r.bucket, target);
        CHECK(r.users_evaluated == want.users);
        CHECK(std::abs(r.recall_at_k - want.recall) <= 1e-12);
        CHECK(std::abs(r.ndcg_at_k - want.ndcg) <= 1e-12);
        CHECK(r.target == target);
      }
    }
    const auto plain = evaluate(inst.emb, 1e-12, inst.splits, nullptr, inst.k);
    const auto with = evaluate(inst.emb, 1e-12, inst.splits, &buckets, inst.k, EvalTarget::Test, true);
    CHECK(plain.size() == 1);
    CHECK(plain[0].recall_at_k == with[0].recall_at_k);
    CHECK(plain[0].ndcg_at_k == with[0].ndcg_at_k);
  }
}

TEST_CASE("evaluate: perfect ranker") {
  // Items embedded on the unit circle; each user points at its test items.
  const std::size_t nu = 4, ni = 24;
  std::vector<Interaction> train, test;
  for (UserId u = 0; u < nu; ++u) {
    train.push_back({u, static_cast<ItemId>(u * 6)});
    for (ItemId k = 1; k <= 3; ++k) test.push_back({u, static_cast<ItemId>(u * 6 + k)});
  }
  DatasetSplits s{InteractionDataset(nu, ni, train), std::nullopt, InteractionDataset(nu, ni, test),
                  SplitKind::OOD};
  Embeddings e{Matrix(nu, 2), Matrix(ni, 2)};
  for (ItemId i = 0; i < ni; ++i) {
    const double ang = 2.0 * M_PI * (i / 6) / 4.0 + 0.01 * (i % 6);
    e.items(i, 0) = std::cos(ang);
    e.items(i, 1) = std::sin(ang);
  }
  for (UserId u = 0; u < nu; ++u) {
    const double ang = 2.0 * M_PI * u / 4.0 + 0.02;
    e.users(u, 0) = std::cos(ang);
    e.users(u, 1) = std::sin(ang);
  }
  const auto r = evaluate(e, 1e-12, s, nullptr, 20);
  CHECK(r[0].recall_at_k == 1.0);
  CHECK(r[0].ndcg_at_k == doctest::Approx(1.0));
  CHECK(r[0].users_evaluated == 4);
  CHECK(r[0].split_kind == SplitKind::OOD);
  CHECK_THROWS_AS(evaluate(e, 1e-12, s, nullptr, 20, EvalTarget::Validation), Error);
}

TEST_CASE("evaluate: empty bucket names the bucket unless skipped") {
  const std::vector<Interaction> train{{0, 0}, {0, 1}, {1, 0}, {1, 2}, {2, 0}};
  const std::vector<Interaction> test{{0, 3}};
  DatasetSplits s{InteractionDataset(3, 5, train), std::nullopt, InteractionDataset(3, 5, test),
                  SplitKind::IID};
  const auto buckets = build_buckets(s.train);
  REQUIRE(buckets.head == std::vector<ItemId>{0});
  Embeddings e{Matrix(3, 2, 1.0), Matrix(5, 2, 1.0)};
  try {
    evaluate(e, 1e-12, s, &buckets, 20);
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(std::string(err.what()).find("head") != std::string::npos);
  }
  const auto r = evaluate(e, 1e-12, s, &buckets, 20, EvalTarget::Test, true);
  REQUIRE(r.size() == 2);
  CHECK(r[1].bucket == Bucket::Tail);
  CHECK(r[1].users_evaluated == 1);
}

TEST_CASE("evaluate: tail users counted on skewed synthetic data") {
  SyntheticSpec spec;
  spec.num_users = 120;
  spec.num_items = 80;
  spec.interactions_per_user = 12;
  const auto d = make_synthetic(spec);
  const auto s = split_iid(d, 3);
  const auto buckets = build_buckets(s.train);
  const auto model = init_embeddings(d.num_users(), d.num_items(), 8, 1);
  const auto r = evaluate({model.users, model.items}, 1e-12, s, &buckets, 20, EvalTarget::Test, true);
  std::size_t tail_users = 0;
  for (UserId u = 0; u < d.num_users(); ++u) {
    if (s.train.positives(u).empty()) continue;
    const auto tp = s.test.positives(u);
    if (std::any_of(tp.begin(), tp.end(), [&](ItemId i) { return buckets.contains(Bucket::Tail, i); })) ++tail_users;
  }
  for (const auto& m : r) {
    if (m.bucket == Bucket::Tail) CHECK(m.users_evaluated == tail_users);
  }
}
