#include "dslrec/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dslrec/matrix.hpp"

namespace dslrec::theory {

std::vector<double> PayoffInstance::reference_or_uniform() const {
  if (!reference.empty()) return reference;
  return std::vector<double>(payoffs.size(), 1.0 / static_cast<double>(payoffs.size()));
}

void PayoffInstance::validate() const {
  if (payoffs.empty()) throw Error("payoff instance needs at least one payoff");
  for (double a : payoffs) {
    if (!std::isfinite(a)) throw Error("payoffs must be finite");
  }
  if (!(inv_temp >= 0.0)) throw Error("inverse temperature must be non-negative");
  if (!reference.empty()) {
    if (reference.size() != payoffs.size()) throw Error("reference length mismatch");
    double s = 0.0;
    for (double p : reference) {
      if (!(p >= 0.0)) throw Error("reference must be non-negative");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error("reference must sum to one");
  }
}

namespace {

// log sum_j pi_j exp(x_j), skipping zero-mass entries.
double log_expect_exp(std::span<const double> x, std::span<const double> pi) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (pi[j] > 0.0) m = std::max(m, x[j] + std::log(pi[j]));
  }
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (pi[j] > 0.0) s += std::exp(x[j] + std::log(pi[j]) - m);
  }
  return m + std::log(s);
}

std::vector<double> scaled(std::span<const double> a, double factor) {
  std::vector<double> out(a.begin(), a.end());
  for (double& v : out) v *= factor;
  return out;
}

std::string describe(std::span<const double> v) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t j = 0; j < v.size(); ++j) os << (j ? ", " : "") << v[j];
  os << ']';
  return os.str();
}

}  // namespace

double log_partition(const PayoffInstance& inst) {
  inst.validate();
  const auto pi = inst.reference_or_uniform();
  return log_expect_exp(scaled(inst.payoffs, inst.inv_temp), pi);
}

double free_energy(const PayoffInstance& inst) {
  if (!(inst.inv_temp > 0.0)) throw Error("free energy needs a positive inverse temperature");
  return log_partition(inst) / inst.inv_temp;
}

std::vector<double> gibbs_optimizer(const PayoffInstance& inst) {
  inst.validate();
  const auto pi = inst.reference_or_uniform();
  const auto x = scaled(inst.payoffs, inst.inv_temp);
  const double lz = log_expect_exp(x, pi);
  std::vector<double> q(x.size(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (pi[j] > 0.0) q[j] = std::exp(x[j] + std::log(pi[j]) - lz);
  }
  return q;
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw Error("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] <= 0.0) continue;
    if (p[j] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += q[j] * std::log(q[j] / p[j]);
  }
  return kl;
}

namespace {

double gibbs_mean(const std::vector<double>& q, std::span<const double> a) {
  double m = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) m += q[j] * a[j];
  return m;
}

}  // namespace

namespace {

// lambda E_q[a] - A(lambda) with payoffs shifted by their max; the unshifted
// difference cancels badly once q* concentrates.
double shifted_radius(const PayoffInstance& inst, const std::vector<double>& q) {
  const double m = *std::max_element(inst.payoffs.begin(), inst.payoffs.end());
  const auto pi = inst.reference_or_uniform();
  double mean = 0.0, z = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    mean += q[j] * (inst.payoffs[j] - m);
    z += pi[j] * std::exp(inst.inv_temp * (inst.payoffs[j] - m));
  }
  return inst.inv_temp * mean - std::log(z);
}

}  // namespace

double kl_radius(const PayoffInstance& inst) {
  return shifted_radius(inst, gibbs_optimizer(inst));
}

DROResult analyze(const PayoffInstance& inst) {
  DROResult r;
  r.gibbs = gibbs_optimizer(inst);
  r.log_partition = log_partition(inst);
  r.free_energy = inst.inv_temp > 0.0 ? r.log_partition / inst.inv_temp : gibbs_mean(r.gibbs, inst.payoffs);
  const double mean = gibbs_mean(r.gibbs, inst.payoffs);
  r.kl_radius = shifted_radius(inst, r.gibbs);
  double var = 0.0;
  for (std::size_t j = 0; j < r.gibbs.size(); ++j) {
    var += r.gibbs[j] * (inst.payoffs[j] - mean) * (inst.payoffs[j] - mean);
  }
  r.payoff_variance_under_gibbs = var;
  return r;
}

void CheckReport::record(double violation, const std::string& context) {
  ++trials;
  if (violation > max_violation) {
    max_violation = violation;
    if (violation > tolerance) counterexample = context;
  }
  if (violation > tolerance) passed = false;
}

void CheckReport::merge(const CheckReport& other) {
  trials += other.trials;
  if (other.max_violation > max_violation) max_violation = other.max_violation;
  if (!other.passed) {
    passed = false;
    if (counterexample.empty()) counterexample = other.counterexample;
  }
}

std::vector<double> dirichlet_one(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> q(n);
  double s = 0.0;
  for (double& v : q) {
    v = expo(rng);
    s += v;
  }
  for (double& v : q) v /= s;
  return q;
}

CheckReport verify_variational_identity(const PayoffInstance& inst, std::size_t trials,
                                        std::uint64_t seed) {
  if (trials < 1) throw Error("variational check needs at least one trial");
  CheckReport rep{"variational identity", 0, 0.0, 1e-10, true, {}};
  const double F = free_energy(inst);
  const double tau = inst.tau();
  const auto pi = inst.reference_or_uniform();
  const double scale = std::max(1.0, std::abs(F));

  const auto q_star = gibbs_optimizer(inst);
  const double plug_in = gibbs_mean(q_star, inst.payoffs) - tau * kl_divergence(q_star, pi);
  rep.record(std::abs(plug_in - F) / scale, "gibbs plug-in q=" + describe(q_star));

  // Sup property: violations are positive excess over the free energy.
  for (std::size_t t = 0; t < trials; ++t) {
    const auto q = dirichlet_one(inst.payoffs.size(), mix_seed(seed, t));
    const double obj = gibbs_mean(q, inst.payoffs) - tau * kl_divergence(q, pi);
    const double excess = std::max(0.0, obj - F) / scale;
    rep.record(excess, excess > rep.tolerance ? "q=" + describe(q) : std::string{});
  }
  return rep;
}

SmoothMaxBounds smooth_max_bounds(const PayoffInstance& inst) {
  if (!inst.reference.empty()) {
    for (double p : inst.reference) {
      if (std::abs(p - 1.0 / static_cast<double>(inst.payoffs.size())) > 1e-15) {
        throw Error("smooth-max bounds assume a uniform reference");
      }
    }
  }
  const double amax = *std::max_element(inst.payoffs.begin(), inst.payoffs.end());
  const double F = free_energy(inst);
  return {amax - inst.tau() * std::log(static_cast<double>(inst.payoffs.size())), F, amax};
}

CheckReport verify_smooth_max(const PayoffInstance& inst) {
  CheckReport rep{"smooth-max sandwich", 0, 0.0, 1e-12, true, {}};
  const auto b = smooth_max_bounds(inst);
  const double violation = std::max({0.0, b.lower - b.value, b.value - b.upper});
  rep.record(violation, violation > rep.tolerance
                            ? "a=" + describe(inst.payoffs) + " tau=" + std::to_string(inst.tau())
                            : std::string{});
  return rep;
}

CheckReport verify_rho_monotonicity(std::span<const double> payoffs,
                                    std::span<const double> reference,
                                    std::span<const double> lambda_grid) {
  for (std::size_t k = 1; k < lambda_grid.size(); ++k) {
    if (!(lambda_grid[k] > lambda_grid[k - 1])) throw Error("lambda grid must be strictly increasing");
  }
  CheckReport rep{"kl radius monotone, drho/dlambda = lambda Var", 0, 0.0, 1e-4, true, {}};
  PayoffInstance inst{{payoffs.begin(), payoffs.end()}, {reference.begin(), reference.end()}, 1.0};
  auto rho_at = [&](double lambda) {
    inst.inv_temp = lambda;
    return kl_radius(inst);
  };
  // Extended-precision rho for the finite-difference oracle.
  const auto pi = inst.reference_or_uniform();
  const long double amax = *std::max_element(payoffs.begin(), payoffs.end());
  auto rho_long = [&](long double lambda) {
    long double z = 0.0L, num = 0.0L;
    for (std::size_t j = 0; j < payoffs.size(); ++j) {
      const long double w = pi[j] * std::exp(lambda * (payoffs[j] - amax));
      z += w;
      num += w * (payoffs[j] - amax);
    }
    return lambda * num / z - std::log(z);
  };

  double prev = -std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    const double rho = rho_at(lambda);
    // Monotonicity has its own absolute tolerance of 1e-10.
    if (prev - rho > 1e-10) {
      rep.passed = false;
      if (rep.counterexample.empty()) {
        rep.counterexample = "rho decreased by " + std::to_string(prev - rho) +
                             " at lambda=" + std::to_string(lambda);
      }
    }
    prev = rho;

    inst.inv_temp = lambda;
    const auto r = analyze(inst);
    const double h = 1e-4 * std::max(lambda, 1.0);
    const long double lo = std::max(lambda - h, 0.0);
    const long double hi = lambda + h;
    const double fd = static_cast<double>((rho_long(hi) - rho_long(lo)) / (hi - lo));
    const double exact = lambda * r.payoff_variance_under_gibbs;
    if (r.payoff_variance_under_gibbs > 1e-8) {
      rep.record(std::abs(fd - exact) / std::max(std::abs(exact), 1e-300),
                 "derivative mismatch at lambda=" + std::to_string(lambda));
    } else {
      rep.record(0.0, {});
    }
  }
  return rep;
}

std::size_t exact_rank(std::span<const double> scores, std::size_t positive) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != positive && scores[j] >= scores[positive]) ++rank;
  }
  return rank;
}

CheckReport verify_dcg_surrogate(std::span<const double> scores, std::size_t positive,
                                 std::span<const double> tau_grid) {
  if (scores.size() > 50) throw Error("dcg surrogate check is brute force; catalog must be <= 50");
  if (positive >= scores.size()) throw Error("positive index out of range");
  CheckReport rep{"rank log-sum-exp upper bound", 0, 0.0, 1e-12, true, {}};
  const double lhs = std::log(static_cast<double>(exact_rank(scores, positive)));
  std::vector<double> z(scores.size());
  for (double tau : tau_grid) {
    for (std::size_t j = 0; j < scores.size(); ++j) z[j] = (scores[j] - scores[positive]) / tau;
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double rhs = m + std::log(s);
    const double gap = std::max(0.0, lhs - rhs);
    rep.record(gap, gap > rep.tolerance
                        ? "scores=" + describe(scores) + " tau=" + std::to_string(tau)
                        : std::string{});
  }
  return rep;
}

std::vector<CheckReport> run_suite(const SuiteOptions& opt) {
  static constexpr double kTauGrid[] = {0.005, 0.025, 0.05, 0.1, 0.2, 0.25};
  std::mt19937_64 rng(mix_seed(opt.seed, 0x7e0));
  std::uniform_real_distribution<double> margin(-2.0, 2.0);
  std::uniform_real_distribution<double> weight(0.05, 3.0);
  std::uniform_real_distribution<double> mult(0.5, 2.0);
  std::uniform_int_distribution<std::size_t> size(1, 32);
  std::uniform_int_distribution<std::size_t> tau_pick(0, std::size(kTauGrid) - 1);

  // Payoffs a = kappa * d at tau_ui = tau / m, mirroring the weighted loss.
  auto random_instance = [&](std::size_t n) {
    PayoffInstance inst;
    inst.payoffs.resize(n);
    for (double& a : inst.payoffs) a = weight(rng) * margin(rng);
    inst.inv_temp = mult(rng) / kTauGrid[tau_pick(rng)];
    return inst;
  };

  std::vector<CheckReport> out;

  CheckReport var{"variational identity + sup over simplex", 0, 0.0, 1e-10, true, {}};
  for (std::size_t t = 0; t < opt.variational_instances; ++t) {
    auto inst = random_instance(std::max<std::size_t>(2, size(rng)));
    if (t % 2 == 1) inst.reference = dirichlet_one(inst.payoffs.size(), mix_seed(opt.seed, 0xa00 + t));
    var.merge(verify_variational_identity(inst, opt.simplex_points, mix_seed(opt.seed, t)));
  }
  out.push_back(var);

  CheckReport sm{"smooth-max sandwich", 0, 0.0, 1e-12, true, {}};
  for (std::size_t t = 0; t < opt.smooth_max_instances; ++t) {
    sm.merge(verify_smooth_max(random_instance(size(rng))));
  }
  out.push_back(sm);

  std::vector<double> grid;
  for (int k = 1; k <= 100; ++k) grid.push_back(0.1 * k);
  CheckReport rho{"kl radius monotone + derivative", 0, 0.0, 1e-4, true, {}};
  for (std::size_t t = 0; t < opt.rho_instances; ++t) {
    auto inst = random_instance(std::max<std::size_t>(2, size(rng)));
    const auto ref = t % 2 ? dirichlet_one(inst.payoffs.size(), mix_seed(opt.seed, 0xb00 + t))
                           : std::vector<double>{};
    rho.merge(verify_rho_monotonicity(inst.payoffs, ref, grid));
  }
  out.push_back(rho);

  CheckReport dcg{"rank log-sum-exp upper bound", 0, 0.0, 1e-12, true, {}};
  std::uniform_real_distribution<double> cosine(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> level(0, 4);
  for (std::size_t t = 0; t < opt.dcg_catalogs; ++t) {
    std::vector<double> scores(opt.dcg_catalog_size);
    // Every fourth catalog is quantised so exact score ties are exercised.
    for (double& s : scores) s = t % 4 == 3 ? -1.0 + 0.5 * static_cast<double>(level(rng)) : cosine(rng);
    std::uniform_int_distribution<std::size_t> pos(0, scores.size() - 1);
    dcg.merge(verify_dcg_surrogate(scores, pos(rng), kTauGrid));
  }
  out.push_back(dcg);
  return out;
}

}  // namespace dslrec::theory
