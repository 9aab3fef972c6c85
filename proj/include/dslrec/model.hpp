#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dslrec/data.hpp"
#include "dslrec/matrix.hpp"

namespace dslrec {

enum class BackboneKind { MF, GraphConv };

struct Backbone {
  BackboneKind kind = BackboneKind::MF;
  std::size_t layers = 2;  // GraphConv only

  std::string name() const;
  static Backbone parse(const std::string& name, std::size_t layers);
  bool operator==(const Backbone&) const = default;
};

struct EmbeddingModel {
  Matrix users;  // num_users x d
  Matrix items;  // num_items x d
  Backbone backbone;
  double norm_epsilon = 1e-12;
  std::uint64_t seed = 0;

  std::size_t dim() const { return users.cols(); }
  bool operator==(const EmbeddingModel&) const = default;
};

/// Entries i.i.d. Normal(0, 0.1 / sqrt(d)).
EmbeddingModel init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t d,
                               std::uint64_t seed, Backbone backbone = {});

/// User-item bipartite graph of the training split in CSR form.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  explicit BipartiteGraph(const InteractionDataset& train);

  std::size_t num_users() const { return user_offsets_.size() - 1; }
  std::size_t num_items() const { return item_offsets_.size() - 1; }
  std::span<const ItemId> items_of(UserId u) const;
  std::span<const UserId> users_of(ItemId i) const;

 private:
  std::vector<std::size_t> user_offsets_{0};
  std::vector<ItemId> user_adj_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<UserId> item_adj_;
};

struct Embeddings {
  Matrix users;
  Matrix items;
};

/// Mean of E, AE, ..., A^L E with A = D^-1/2 [0 R; R^T 0] D^-1/2. Isolated
/// nodes receive nothing from propagation. The operator is symmetric, so the
/// same call maps gradients on the output back to gradients on the input.
Embeddings propagate(const Matrix& users, const Matrix& items, const BipartiteGraph& graph,
                     std::size_t layers);

/// Identity for MF; propagated tables for GraphConv.
Embeddings effective_embeddings(const EmbeddingModel& model, const BipartiteGraph& graph);

/// Chain a gradient on the effective embeddings back to the model tables.
Embeddings backprop_embeddings(const EmbeddingModel& model, const BipartiteGraph& graph,
                               Embeddings grad_effective);

double cosine(std::span<const double> a, std::span<const double> b, double eps);

/// B x M cosine scores; row b pairs users[b] with items.row(b).
Matrix score(const Embeddings& emb, std::span<const UserId> users, const IdMatrix& items,
             double eps);

struct SimilarityMatrix {
  Matrix raw;      // s_ij in [-1, 1]
  Matrix shifted;  // (s_ij + 1) / 2 in [0, 1]
};

SimilarityMatrix item_similarity(const Embeddings& emb, std::span<const ItemId> pos_items,
                                 const IdMatrix& neg_items, double eps);

/// Gradient of sum_bk grad(b,k) * score(b,k) with respect to the embeddings.
Embeddings score_backward(const Embeddings& emb, std::span<const UserId> users,
                          const IdMatrix& items, const Matrix& grad, double eps);

/// Full-catalog ranking for one user, descending score then ascending id.
std::vector<ItemId> score_all_items(const Embeddings& emb, UserId user,
                                    std::span<const ItemId> exclude, double eps);

/// First `k` entries of the score_all_items order; `excluded` is a per-item
/// mask.
std::vector<ItemId> top_k_items(const Embeddings& emb, UserId user,
                                std::span<const char> excluded, std::size_t k, double eps);

/// Header (magic, num_users, num_items, d, backbone tag, layers, seed,
/// norm_epsilon) followed by both tables as raw little-endian doubles.
void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace dslrec
