#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dslrec/matrix.hpp"
#include "dslrec/model.hpp"

namespace dslrec {

// Score matrices throughout this header are B x (1 + N): column 0 holds the
// positive score f(u,i), columns 1..N the negative scores f(u,j). Similarity
// matrices are B x N and aligned with the negative columns.

struct DSLConfig {
  double tau = 0.1;
  double beta = 1.0;
  double alpha = 1.0;
  std::size_t slate_size = 20;
  bool kappa_enabled = true;
  bool ca_enabled = true;
  double kappa_floor = 1e-3;

  void validate() const;
};

struct KappaWeights {
  Matrix mean_one;               // after exponential normalisation, strength and floor
  Matrix values;                 // after the inverse-mean rescale; used in the loss
  std::vector<double> inv_mean;  // E_j[1 / mean_one] per row
};

struct CAState {
  Dense<std::uint32_t> slate;  // B x K negative column indices (0-based), best first
  Matrix slate_probs;          // B x K
  std::vector<double> intensity;
  std::vector<double> multiplier;
  std::vector<double> per_example_tau;
};

struct LossOutput {
  double total = 0.0;
  std::vector<double> per_example;
  Matrix grad_wrt_scores;  // same shape as the score matrix

  // Softmax family only: q (B x N), the weights that multiplied each margin,
  // and the per-row temperature.
  Matrix probs;
  Matrix kappa_used;
  std::vector<double> row_tau;

  std::optional<KappaWeights> kappa;
  std::optional<CAState> ca;
};

/// Sum over rows of log sum_j exp((f_j - f_i) / tau).
LossOutput softmax_loss(const Matrix& scores, double tau);

/// Per-row mean over negatives of -log sigmoid(f_i - f_j); total sums rows.
LossOutput bpr_loss(const Matrix& scores);

/// Competition weights from hardness plus shifted similarity. Treated as
/// constants by the gradient.
KappaWeights compute_kappa(const Matrix& scores, const SimilarityMatrix& sims, double beta,
                           double kappa_floor);

/// Competition-aware per-example temperature. `neg_items`, when given, breaks
/// slate score ties by ascending item id (then column); otherwise by column.
CAState compute_ca(const Matrix& scores, const SimilarityMatrix& sims, double tau, double alpha,
                   std::size_t slate_size, const IdMatrix* neg_items = nullptr);

LossOutput dsl_loss(const Matrix& scores, const SimilarityMatrix& sims, const DSLConfig& config,
                    const IdMatrix* neg_items = nullptr);

/// lambda_uij = q_uij * kappa_uij / tau_ui; identical to the negative-score
/// gradient columns.
Matrix pairwise_weights(const LossOutput& out);

/// log sum_j exp(kappa_j d_j / tau_b) with every weight held fixed. Used to
/// evaluate the loss surface the analytic gradient differentiates.
LossOutput weighted_softmax(const Matrix& scores, const Matrix* kappa,
                            std::span<const double> row_tau);

struct LossSummary {
  double loss = 0.0;
  double kappa_mean = 1.0, kappa_max = 1.0;
  double c_mean = 0.0, c_min = 0.0, c_max = 0.0;
  double tau_min = 0.0, tau_max = 0.0;
};

LossSummary summarize(const LossOutput& out);

}  // namespace dslrec
