#include "dslrec/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dslrec {

void DSLConfig::validate() const {
  if (!(tau > 0.0)) throw Error("tau must be positive");
  if (!(beta >= 0.0)) throw Error("beta must be non-negative");
  if (!(alpha >= 0.0)) throw Error("alpha must be non-negative");
  if (slate_size < 1) throw Error("slate size must be at least 1");
  if (!(kappa_floor > 0.0 && kappa_floor < 1.0)) throw Error("kappa floor must lie in (0, 1)");
}

namespace {

void require_scores(const Matrix& scores) {
  if (scores.cols() < 2) throw Error("score matrix needs a positive and at least one negative");
}

void require_aligned(const Matrix& scores, const SimilarityMatrix& sims) {
  require_scores(scores);
  if (sims.shifted.rows() != scores.rows() || sims.shifted.cols() + 1 != scores.cols()) {
    throw Error("similarity matrix is not aligned with the negative scores");
  }
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

LossOutput weighted_softmax(const Matrix& scores, const Matrix* kappa,
                            std::span<const double> row_tau) {
  require_scores(scores);
  const std::size_t B = scores.rows();
  const std::size_t N = scores.cols() - 1;
  if (row_tau.size() != B) throw Error("row temperature vector has the wrong length");

  LossOutput out;
  out.per_example.assign(B, 0.0);
  out.grad_wrt_scores = Matrix(B, N + 1);
  out.probs = Matrix(B, N);
  out.kappa_used = kappa ? *kappa : Matrix(B, N, 1.0);
  out.row_tau.assign(row_tau.begin(), row_tau.end());

  std::vector<double> z(N);
  for (std::size_t b = 0; b < B; ++b) {
    const auto f = scores.row(b);
    const double tau = row_tau[b];
    for (std::size_t j = 0; j < N; ++j) {
      const double k = kappa ? (*kappa)(b, j) : 1.0;
      z[j] = k * (f[j + 1] - f[0]) / tau;
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      out.probs(b, j) = std::exp(z[j] - zmax);
      s += out.probs(b, j);
    }
    out.per_example[b] = zmax + std::log(s);
    double pos_grad = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double q = out.probs(b, j) / s;
      out.probs(b, j) = q;
      const double lambda = q * out.kappa_used(b, j) / tau;
      out.grad_wrt_scores(b, j + 1) = lambda;
      pos_grad += lambda;
    }
    out.grad_wrt_scores(b, 0) = -pos_grad;
  }
  out.total = std::accumulate(out.per_example.begin(), out.per_example.end(), 0.0);
  return out;
}

LossOutput softmax_loss(const Matrix& scores, double tau) {
  if (!(tau > 0.0)) throw Error("tau must be positive");
  const std::vector<double> row_tau(scores.rows(), tau);
  return weighted_softmax(scores, nullptr, row_tau);
}

LossOutput bpr_loss(const Matrix& scores) {
  require_scores(scores);
  const std::size_t B = scores.rows();
  const std::size_t N = scores.cols() - 1;
  const double inv_n = 1.0 / static_cast<double>(N);
  LossOutput out;
  out.per_example.assign(B, 0.0);
  out.grad_wrt_scores = Matrix(B, N + 1);
  for (std::size_t b = 0; b < B; ++b) {
    const auto f = scores.row(b);
    double loss = 0.0, pos_grad = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double x = f[0] - f[j + 1];
      // softplus(-x) and sigmoid(-x), both overflow-safe
      loss += x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
      const double sig_neg = x >= 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
      const double g = sig_neg * inv_n;
      out.grad_wrt_scores(b, j + 1) = g;
      pos_grad += g;
    }
    out.grad_wrt_scores(b, 0) = -pos_grad;
    out.per_example[b] = loss * inv_n;
  }
  out.total = std::accumulate(out.per_example.begin(), out.per_example.end(), 0.0);
  return out;
}

namespace {

// Raise entries below the floor to it and shrink the rest proportionally so
// the row keeps mean one. Repeats while shrinking pushes new entries under.
void floor_row(std::span<double> row, double floor) {
  const std::size_t n = row.size();
  std::vector<char> pinned(n, 0);
  for (;;) {
    std::size_t n_pinned = 0;
    double free_sum = 0.0;
    bool changed = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!pinned[j] && row[j] < floor) {
        pinned[j] = 1;
        changed = true;
      }
    }
    if (!changed) return;
    for (std::size_t j = 0; j < n; ++j) {
      if (pinned[j]) ++n_pinned;
      else free_sum += row[j];
    }
    const double target = static_cast<double>(n) - floor * static_cast<double>(n_pinned);
    const double scale = free_sum > 0.0 ? target / free_sum : 0.0;
    for (std::size_t j = 0; j < n; ++j) row[j] = pinned[j] ? floor : row[j] * scale;
  }
}

}  // namespace

KappaWeights compute_kappa(const Matrix& scores, const SimilarityMatrix& sims, double beta,
                           double kappa_floor) {
  require_aligned(scores, sims);
  if (!(beta >= 0.0)) throw Error("beta must be non-negative");
  const std::size_t B = scores.rows();
  const std::size_t N = scores.cols() - 1;
  KappaWeights w{Matrix(B, N), Matrix(B, N), std::vector<double>(B, 1.0)};
  std::vector<double> logit(N);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < N; ++j) logit[j] = scores(b, j + 1) + sims.shifted(b, j);
    const double lmax = *std::max_element(logit.begin(), logit.end());
    auto row = w.mean_one.row(b);
    double mean = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      row[j] = std::exp(logit[j] - lmax);
      mean += row[j];
    }
    mean /= static_cast<double>(N);
    for (std::size_t j = 0; j < N; ++j) row[j] = 1.0 + beta * (row[j] / mean - 1.0);
    floor_row(row, kappa_floor);

    double inv_mean = 0.0;
    for (double k : row) inv_mean += 1.0 / k;
    inv_mean /= static_cast<double>(N);
    w.inv_mean[b] = inv_mean;
    auto final_row = w.values.row(b);
    for (std::size_t j = 0; j < N; ++j) final_row[j] = row[j] * inv_mean;
  }
  return w;
}

CAState compute_ca(const Matrix& scores, const SimilarityMatrix& sims, double tau, double alpha,
                   std::size_t slate_size, const IdMatrix* neg_items) {
  require_aligned(scores, sims);
  if (!(tau > 0.0)) throw Error("tau must be positive");
  if (!(alpha >= 0.0)) throw Error("alpha must be non-negative");
  if (slate_size < 1) throw Error("slate size must be at least 1");
  const std::size_t B = scores.rows();
  const std::size_t N = scores.cols() - 1;
  const std::size_t K = std::min(slate_size, N);

  CAState st;
  st.slate = Dense<std::uint32_t>(B, K);
  st.slate_probs = Matrix(B, K);
  st.intensity.assign(B, 0.0);
  st.multiplier.assign(B, 1.0);
  st.per_example_tau.assign(B, tau);

  std::vector<std::uint32_t> cols(N);
  std::vector<double> hard(K), tilted(K);
  for (std::size_t b = 0; b < B; ++b) {
    std::iota(cols.begin(), cols.end(), 0u);
    std::partial_sort(cols.begin(), cols.begin() + K, cols.end(),
                      [&](std::uint32_t a, std::uint32_t c) {
                        const double fa = scores(b, a + 1), fc = scores(b, c + 1);
                        if (fa != fc) return fa > fc;
                        if (neg_items) {
                          const ItemId ia = (*neg_items)(b, a), ic = (*neg_items)(b, c);
                          if (ia != ic) return ia < ic;
                        }
                        return a < c;
                      });
    for (std::size_t k = 0; k < K; ++k) {
      const std::uint32_t j = cols[k];
      st.slate(b, k) = j;
      hard[k] = scores(b, j + 1) / tau;
      tilted[k] = hard[k] + sims.shifted(b, j);
    }
    const double lse_hard = log_sum_exp(hard);
    for (std::size_t k = 0; k < K; ++k) st.slate_probs(b, k) = std::exp(hard[k] - lse_hard);
    st.intensity[b] = std::clamp(log_sum_exp(tilted) - lse_hard, 0.0, 1.0);
  }

  if (alpha > 0.0 && B > 0) {
    std::vector<double> x(B);
    for (std::size_t b = 0; b < B; ++b) x[b] = alpha * st.intensity[b];
    const double xmax = *std::max_element(x.begin(), x.end());
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      st.multiplier[b] = std::exp(x[b] - xmax);
      mean += st.multiplier[b];
    }
    mean /= static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
      st.multiplier[b] /= mean;
      st.per_example_tau[b] = tau / st.multiplier[b];
    }
  }
  return st;
}

LossOutput dsl_loss(const Matrix& scores, const SimilarityMatrix& sims, const DSLConfig& config,
                    const IdMatrix* neg_items) {
  config.validate();
  require_scores(scores);
  std::optional<KappaWeights> kappa;
  std::optional<CAState> ca;
  if (config.kappa_enabled) {
    kappa = compute_kappa(scores, sims, config.beta, config.kappa_floor);
  }
  std::vector<double> row_tau(scores.rows(), config.tau);
  if (config.ca_enabled) {
    ca = compute_ca(scores, sims, config.tau, config.alpha, config.slate_size, neg_items);
    row_tau = ca->per_example_tau;
  }
  LossOutput out = weighted_softmax(scores, kappa ? &kappa->values : nullptr, row_tau);
  out.kappa = std::move(kappa);
  out.ca = std::move(ca);
  return out;
}

Matrix pairwise_weights(const LossOutput& out) {
  if (out.probs.empty()) throw Error("pairwise weights need a softmax-family loss output");
  Matrix lambda(out.probs.rows(), out.probs.cols());
  for (std::size_t b = 0; b < lambda.rows(); ++b) {
    for (std::size_t j = 0; j < lambda.cols(); ++j) {
      lambda(b, j) = out.probs(b, j) * out.kappa_used(b, j) / out.row_tau[b];
    }
  }
  return lambda;
}

LossSummary summarize(const LossOutput& out) {
  LossSummary s;
  s.loss = out.total;
  if (out.kappa) {
    const auto v = out.kappa->values.flat();
    if (!v.empty()) {
      s.kappa_mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      s.kappa_max = *std::max_element(v.begin(), v.end());
    }
  }
  if (out.ca && !out.ca->intensity.empty()) {
    const auto& c = out.ca->intensity;
    s.c_mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    s.c_min = *std::min_element(c.begin(), c.end());
    s.c_max = *std::max_element(c.begin(), c.end());
  }
  if (!out.row_tau.empty()) {
    s.tau_min = *std::min_element(out.row_tau.begin(), out.row_tau.end());
    s.tau_max = *std::max_element(out.row_tau.begin(), out.row_tau.end());
  }
  return s;
}

}  // namespace dslrec
