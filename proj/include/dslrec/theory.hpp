#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dslrec::theory {

/// Payoffs a_j over N negatives, a reference distribution pi and the inverse
/// temperature lambda = 1 / tau.
struct PayoffInstance {
  std::vector<double> payoffs;
  std::vector<double> reference;  // empty means uniform 1/N
  double inv_temp = 1.0;

  double tau() const { return 1.0 / inv_temp; }
  std::vector<double> reference_or_uniform() const;
  void validate() const;
};

struct DROResult {
  double free_energy = 0.0;
  std::vector<double> gibbs;
  double kl_radius = 0.0;
  double log_partition = 0.0;
  double payoff_variance_under_gibbs = 0.0;
};

/// tau * log E_pi[exp(a / tau)].
double free_energy(const PayoffInstance& inst);

/// A(lambda) = log E_pi[exp(lambda a)]; defined for lambda >= 0.
double log_partition(const PayoffInstance& inst);

/// q*_j proportional to pi_j exp(lambda a_j).
std::vector<double> gibbs_optimizer(const PayoffInstance& inst);

double kl_divergence(std::span<const double> q, std::span<const double> p);

/// rho(lambda) = lambda E_{q*}[a] - A(lambda).
double kl_radius(const PayoffInstance& inst);

DROResult analyze(const PayoffInstance& inst);

struct CheckReport {
  std::string name;
  std::size_t trials = 0;
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string counterexample;

  void record(double violation, const std::string& context);
  void merge(const CheckReport& other);
};

/// (a) Gibbs plug-in reproduces the free energy; (b) no Dirichlet(1) sample
/// q beats it: E_q[a] - tau KL(q || pi) <= free energy.
CheckReport verify_variational_identity(const PayoffInstance& inst, std::size_t trials,
                                        std::uint64_t seed);

struct SmoothMaxBounds {
  double lower, value, upper;
};

/// max(a) - tau log N <= free energy <= max(a), uniform reference.
SmoothMaxBounds smooth_max_bounds(const PayoffInstance& inst);
CheckReport verify_smooth_max(const PayoffInstance& inst);

/// rho nondecreasing along the grid and d rho / d lambda = lambda Var_{q*}[a]
/// by central differences at each grid point.
CheckReport verify_rho_monotonicity(std::span<const double> payoffs,
                                    std::span<const double> reference,
                                    std::span<const double> lambda_grid);

/// Exact rank of `positive` (1 + #{j != i : f_j >= f_i}) against
/// log sum_j exp((f_j - f_i) / tau) over the full catalog, for each tau.
CheckReport verify_dcg_surrogate(std::span<const double> scores, std::size_t positive,
                                 std::span<const double> tau_grid);

std::size_t exact_rank(std::span<const double> scores, std::size_t positive);

struct SuiteOptions {
  std::size_t variational_instances = 100;
  std::size_t simplex_points = 1000;
  std::size_t smooth_max_instances = 10000;
  std::size_t rho_instances = 100;
  std::size_t dcg_catalogs = 1000;
  std::size_t dcg_catalog_size = 20;
  std::uint64_t seed = 7;
};

/// One report per identity over randomized instances.
std::vector<CheckReport> run_suite(const SuiteOptions& options);

std::vector<double> dirichlet_one(std::size_t n, std::uint64_t seed);

}  // namespace dslrec::theory
