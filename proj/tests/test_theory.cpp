#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dslrec/matrix.hpp"
#include "dslrec/theory.hpp"

using namespace dslrec;
using namespace dslrec::theory;

namespace {

PayoffInstance inst(std::vector<double> a, double lambda, std::vector<double> pi = {}) {
  return PayoffInstance{std::move(a), std::move(pi), lambda};
}

std::vector<double> random_payoffs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> a(n);
  for (double& x : a) x = u(rng);
  return a;
}

}  // namespace

TEST_CASE("free_energy: constants and the raw loss offset") {
  CHECK(free_energy(inst({0, 0, 0}, 10.0)) == doctest::Approx(0.0));
  for (double lambda : {0.01, 1.0, 200.0}) {
    CHECK(free_energy(inst({0.7, 0.7, 0.7, 0.7}, lambda)) == doctest::Approx(0.7).epsilon(1e-14));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_payoffs(16, seed);
    const double tau = 0.05;
    long double m = *std::max_element(a.begin(), a.end()), s = 0;
    for (double x : a) s += std::exp((x - m) / tau);
    const double raw = static_cast<double>(m / tau + std::log(s));
    const double fe = free_energy(inst(a, 1.0 / tau));
    CHECK(std::abs((fe + tau * std::log(16.0)) / tau - raw) <= 1e-12 * std::max(1.0, raw));
  }
  CHECK_THROWS_AS(free_energy(inst({1.0}, 0.0)), Error);
  CHECK_THROWS_AS(free_energy(inst({1.0, 2.0}, 1.0, {0.3, 0.3})), Error);
}

TEST_CASE("free_energy: shift equivariance and the large-temperature limit") {
  const auto a = random_payoffs(10, 3);
  auto shifted = a;
  for (double& x : shifted) x += 4.25;
  CHECK(free_energy(inst(shifted, 3.0)) == doctest::Approx(free_energy(inst(a, 3.0)) + 4.25).epsilon(1e-13));
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / 10.0;
  CHECK(std::abs(free_energy(inst(a, 1e-6)) - mean) < 1e-3);
}

TEST_CASE("gibbs_optimizer: reference, saturation, argmax") {
  const std::vector<double> pi{0.1, 0.2, 0.3, 0.4};
  const auto q = gibbs_optimizer(inst({2, 2, 2, 2}, 5.0, pi));
  for (std::size_t j = 0; j < 4; ++j) CHECK(q[j] == doctest::Approx(pi[j]));
  const auto sat = gibbs_optimizer(inst({0.0, 0.0, 1.0, 0.0}, 100.0));
  CHECK(sat[2] >= 0.999);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_payoffs(12, 50 + seed);
    const auto g = gibbs_optimizer(inst(a, 2.0));
    CHECK(std::max_element(g.begin(), g.end()) - g.begin() == std::max_element(a.begin(), a.end()) - a.begin());
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("variational identity: two-point case and q = pi") {
  const auto r = verify_variational_identity(inst({1.0, 0.0}, 1.0), 1000, 3);
  CHECK(r.passed);
  CHECK(r.trials == 1001);
  const auto p = inst({1.0, -0.5, 0.25}, 2.0);
  const double mean_pi = (1.0 - 0.5 + 0.25) / 3.0;
  CHECK(mean_pi <= free_energy(p));
}

TEST_CASE("variational identity: random instances with Dirichlet references") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_payoffs(8, 80 + seed);
    const auto pi = dirichlet_one(8, 90 + seed);
    const auto r = verify_variational_identity(inst(a, 7.0, pi), 1000, seed);
    CHECK(r.passed);
    CHECK(r.max_violation <= 1e-10);
  }
  const auto q = dirichlet_one(5, 1);
  CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0));
  for (double v : q) CHECK(v > 0.0);
}

TEST_CASE("smooth-max sandwich") {
  const auto single = smooth_max_bounds(inst({0.4}, 3.0));
  CHECK(single.lower == doctest::Approx(0.4));
  CHECK(single.value == doctest::Approx(0.4));
  CHECK(single.upper == doctest::Approx(0.4));
  const auto flat = smooth_max_bounds(inst({0.3, 0.3, 0.3, 0.3, 0.3}, 2.0));
  CHECK(flat.value == doctest::Approx(0.3));
  CHECK(flat.upper - flat.lower == doctest::Approx(0.5 * std::log(5.0)));
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    CHECK(verify_smooth_max(inst(random_payoffs(1 + seed % 30, seed), 0.5 + seed % 7)).passed);
  }
  CHECK_THROWS_AS(smooth_max_bounds(inst({1.0, 2.0}, 1.0, {0.2, 0.8})), Error);
}

TEST_CASE("kl_radius: zero cases and the direct KL oracle") {
  CHECK(kl_radius(inst({1.0, -1.0, 0.5}, 0.0)) == doctest::Approx(0.0));
  for (double lambda : {0.5, 5.0, 50.0}) {
    CHECK(std::abs(kl_radius(inst({0.2, 0.2, 0.2}, lambda))) < 1e-14);
  }
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto a = random_payoffs(10, 200 + seed);
    const auto pi = dirichlet_one(10, 300 + seed);
    const auto p = inst(a, 0.5 + static_cast<double>(seed), pi);
    const double direct = kl_divergence(gibbs_optimizer(p), pi);
    CHECK(std::abs(kl_radius(p) - direct) < 1e-10);
    const auto r = analyze(p);
    CHECK(r.kl_radius >= 0.0);
    CHECK(r.kl_radius == doctest::Approx(kl_radius(p)));
  }
}

TEST_CASE("rho monotonicity and derivative on a lambda grid") {
  std::vector<double> grid;
  for (int k = 1; k <= 100; ++k) grid.push_back(0.1 * k);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_payoffs(12, 400 + seed);
    const auto r = verify_rho_monotonicity(a, {}, grid);
    CHECK(r.passed);
  }
  const auto flat = verify_rho_monotonicity(std::vector<double>{0.5, 0.5, 0.5}, {}, grid);
  CHECK(flat.passed);
  CHECK(kl_radius(inst({0.0, 1.0}, 60.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const std::vector<double> bad{1.0, 0.5};
  CHECK_THROWS_AS(verify_rho_monotonicity(std::vector<double>{0.0, 1.0}, {}, bad), Error);
}

TEST_CASE("rank surrogate bound") {
  const std::vector<double> taus{0.005, 0.1, 1.0};
  std::vector<double> top{0.9, -0.5, -0.8, -0.1};
  CHECK(exact_rank(top, 0) == 1);
  CHECK(verify_dcg_surrogate(top, 0, taus).passed);
  std::vector<double> equal(7, 0.25);
  CHECK(exact_rank(equal, 3) == 7);
  const auto r = verify_dcg_surrogate(equal, 3, taus);
  CHECK(r.passed);
  CHECK(r.max_violation == 0.0);
  std::vector<double> ties{0.5, 0.1, 0.5, 0.9};
  CHECK(exact_rank(ties, 0) == 3);
  CHECK_THROWS_AS(verify_dcg_surrogate(std::vector<double>(51, 0.0), 0, taus), Error);
}

TEST_CASE("suite: small configuration passes") {
  SuiteOptions opt;
  opt.variational_instances = 10;
  opt.simplex_points = 100;
  opt.smooth_max_instances = 200;
  opt.rho_instances = 5;
  opt.dcg_catalogs = 50;
  const auto reports = run_suite(opt);
  CHECK(reports.size() == 4);
  for (const auto& r : reports) {
    CAPTURE(r.name);
    CHECK(r.passed);
    CHECK(r.trials > 0);
  }
}
