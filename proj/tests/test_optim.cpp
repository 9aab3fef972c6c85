#include <doctest.h>

#include <cmath>
#include <vector>

#include "dslrec/matrix.hpp"
#include "dslrec/optim.hpp"

using namespace dslrec;

TEST_CASE("adam: scalar reference on a one-parameter quadratic") {
  // Reference update written out for a single parameter, f(x) = (x - 3)^2.
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  double x_ref = -1.0, m = 0.0, v = 0.0;
  std::vector<double> x{-1.0};
  AdamState state;
  const Adam adam({lr, b1, b2, eps, wd});
  for (int t = 1; t <= 200; ++t) {
    const double g_ref = 2.0 * (x_ref - 3.0);
    m = b1 * m + (1 - b1) * g_ref;
    v = b2 * v + (1 - b2) * g_ref * g_ref;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    x_ref = x_ref * (1 - lr * wd) - lr * mh / (std::sqrt(vh) + eps);

    const std::vector<double> g{2.0 * (x[0] - 3.0)};
    adam.step(x, g, state);
    CHECK(std::abs(x[0] - x_ref) <= 1e-12);
  }
  CHECK(state.steps == 200);
}

TEST_CASE("adam: first step moves by the learning rate") {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.3, -7.0};
  AdamState s;
  Adam({0.1, 0.9, 0.999, 1e-8, 0.0}).step(p, g, s);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-7));
}

TEST_CASE("adam: zero learning rate freezes; decay shrinks on zero gradient") {
  std::vector<double> p{0.5, -1.5, 2.0};
  const std::vector<double> zero(3, 0.0);
  AdamState s;
  const auto before = p;
  for (int k = 0; k < 10; ++k) Adam({0.0, 0.9, 0.999, 1e-8, 0.0}).step(p, zero, s);
  CHECK(p == before);
  for (int k = 0; k < 10; ++k) Adam({0.0, 0.9, 0.999, 1e-8, 0.1}).step(p, zero, s);
  CHECK(p == before);

  AdamState s2;
  double prev = 0.0;
  for (double x : p) prev += x * x;
  for (int k = 0; k < 5; ++k) {
    Adam({0.01, 0.9, 0.999, 1e-8, 0.5}).step(p, zero, s2);
    double norm = 0.0;
    for (double x : p) norm += x * x;
    CHECK(norm < prev);
    prev = norm;
  }
  std::vector<double> wrong(2, 0.0);
  CHECK_THROWS_AS(Adam({}).step(p, wrong, s2), Error);
}
