#include "dslrec/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace dslrec {

std::string Backbone::name() const { return kind == BackboneKind::MF ? "mf" : "graphconv"; }

Backbone Backbone::parse(const std::string& name, std::size_t layers) {
  if (name == "mf" || name == "MF") return {BackboneKind::MF, layers};
  if (name == "graphconv" || name == "lightgcn" || name == "GraphConv") {
    if (layers == 0) throw Error("graphconv backbone needs at least one layer");
    return {BackboneKind::GraphConv, layers};
  }
  throw Error("unknown backbone '" + name + "' (expected mf or graphconv)");
}

EmbeddingModel init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t d,
                               std::uint64_t seed, Backbone backbone) {
  if (num_users == 0 || num_items == 0 || d == 0) {
    throw Error("init_embeddings needs positive users, items and dimension");
  }
  EmbeddingModel m;
  m.users = Matrix(num_users, d);
  m.items = Matrix(num_items, d);
  m.backbone = backbone;
  m.seed = seed;
  std::mt19937_64 rng(mix_seed(seed, 0xe3b));
  std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(d)));
  for (double& x : m.users.flat()) x = normal(rng);
  for (double& x : m.items.flat()) x = normal(rng);
  return m;
}

BipartiteGraph::BipartiteGraph(const InteractionDataset& train) {
  const auto nu = train.num_users();
  const auto ni = train.num_items();
  user_offsets_.assign(nu + 1, 0);
  item_offsets_.assign(ni + 1, 0);
  for (const auto& p : train.interactions()) {
    ++user_offsets_[p.user + 1];
    ++item_offsets_[p.item + 1];
  }
  std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
  std::partial_sum(item_offsets_.begin(), item_offsets_.end(), item_offsets_.begin());
  user_adj_.resize(train.size());
  item_adj_.resize(train.size());
  std::vector<std::size_t> ucur(user_offsets_.begin(), user_offsets_.end() - 1);
  std::vector<std::size_t> icur(item_offsets_.begin(), item_offsets_.end() - 1);
  for (const auto& p : train.interactions()) {
    user_adj_[ucur[p.user]++] = p.item;
    item_adj_[icur[p.item]++] = p.user;
  }
}

std::span<const ItemId> BipartiteGraph::items_of(UserId u) const {
  return std::span<const ItemId>(user_adj_).subspan(user_offsets_[u],
                                                    user_offsets_[u + 1] - user_offsets_[u]);
}

std::span<const UserId> BipartiteGraph::users_of(ItemId i) const {
  return std::span<const UserId>(item_adj_).subspan(item_offsets_[i],
                                                    item_offsets_[i + 1] - item_offsets_[i]);
}

Embeddings propagate(const Matrix& users, const Matrix& items, const BipartiteGraph& graph,
                     std::size_t layers) {
  const std::size_t nu = users.rows();
  const std::size_t ni = items.rows();
  const std::size_t d = users.cols();
  if (graph.num_users() != nu || graph.num_items() != ni) {
    throw Error("graph does not match embedding table sizes");
  }
  std::vector<double> inv_sqrt_u(nu), inv_sqrt_i(ni);
  for (std::size_t u = 0; u < nu; ++u) {
    const auto deg = graph.items_of(static_cast<UserId>(u)).size();
    inv_sqrt_u[u] = deg ? 1.0 / std::sqrt(static_cast<double>(deg)) : 0.0;
  }
  for (std::size_t i = 0; i < ni; ++i) {
    const auto deg = graph.users_of(static_cast<ItemId>(i)).size();
    inv_sqrt_i[i] = deg ? 1.0 / std::sqrt(static_cast<double>(deg)) : 0.0;
  }

  Embeddings sum{users, items};
  Matrix cur_u = users, cur_i = items;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix next_u(nu, d), next_i(ni, d);
    for (std::size_t u = 0; u < nu; ++u) {
      auto out = next_u.row(u);
      for (ItemId i : graph.items_of(static_cast<UserId>(u))) {
        axpy(inv_sqrt_u[u] * inv_sqrt_i[i], cur_i.row(i), out);
      }
    }
    for (std::size_t i = 0; i < ni; ++i) {
      auto out = next_i.row(i);
      for (UserId u : graph.users_of(static_cast<ItemId>(i))) {
        axpy(inv_sqrt_u[u] * inv_sqrt_i[i], cur_u.row(u), out);
      }
    }
    cur_u = std::move(next_u);
    cur_i = std::move(next_i);
    axpy(1.0, cur_u.flat(), sum.users.flat());
    axpy(1.0, cur_i.flat(), sum.items.flat());
  }
  const double scale = 1.0 / static_cast<double>(layers + 1);
  for (double& x : sum.users.flat()) x *= scale;
  for (double& x : sum.items.flat()) x *= scale;
  return sum;
}

Embeddings effective_embeddings(const EmbeddingModel& model, const BipartiteGraph& graph) {
  if (model.backbone.kind == BackboneKind::MF) return {model.users, model.items};
  return propagate(model.users, model.items, graph, model.backbone.layers);
}

Embeddings backprop_embeddings(const EmbeddingModel& model, const BipartiteGraph& graph,
                               Embeddings grad_effective) {
  if (model.backbone.kind == BackboneKind::MF) return grad_effective;
  return propagate(grad_effective.users, grad_effective.items, graph, model.backbone.layers);
}

namespace {

double guarded_norm(std::span<const double> v, double eps) {
  return std::max(std::sqrt(dot(v, v)), eps);
}

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b, double eps) {
  return clamp_unit(dot(a, b) / (guarded_norm(a, eps) * guarded_norm(b, eps)));
}

Matrix score(const Embeddings& emb, std::span<const UserId> users, const IdMatrix& items,
             double eps) {
  if (users.size() != items.rows()) throw Error("score: users and item rows differ");
  Matrix out(items.rows(), items.cols());
  std::vector<double> item_norm(emb.items.rows(), -1.0);
  for (std::size_t b = 0; b < items.rows(); ++b) {
    const auto uvec = emb.users.row(users[b]);
    const double nu = guarded_norm(uvec, eps);
    for (std::size_t k = 0; k < items.cols(); ++k) {
      const ItemId j = items(b, k);
      if (item_norm[j] < 0.0) item_norm[j] = guarded_norm(emb.items.row(j), eps);
      out(b, k) = clamp_unit(dot(uvec, emb.items.row(j)) / (nu * item_norm[j]));
    }
  }
  return out;
}

SimilarityMatrix item_similarity(const Embeddings& emb, std::span<const ItemId> pos_items,
                                 const IdMatrix& neg_items, double eps) {
  if (pos_items.size() != neg_items.rows()) {
    throw Error("item_similarity: positives and negative rows differ");
  }
  SimilarityMatrix s{Matrix(neg_items.rows(), neg_items.cols()),
                     Matrix(neg_items.rows(), neg_items.cols())};
  std::vector<double> item_norm(emb.items.rows(), -1.0);
  auto norm_of = [&](ItemId j) {
    if (item_norm[j] < 0.0) item_norm[j] = guarded_norm(emb.items.row(j), eps);
    return item_norm[j];
  };
  for (std::size_t b = 0; b < neg_items.rows(); ++b) {
    const ItemId i = pos_items[b];
    const auto vi = emb.items.row(i);
    const double ni = norm_of(i);
    for (std::size_t k = 0; k < neg_items.cols(); ++k) {
      const ItemId j = neg_items(b, k);
      // Self-similarity is exactly one even under rounding.
      const double raw = j == i ? 1.0 : clamp_unit(dot(vi, emb.items.row(j)) / (ni * norm_of(j)));
      s.raw(b, k) = raw;
      s.shifted(b, k) = (raw + 1.0) / 2.0;
    }
  }
  return s;
}

Embeddings score_backward(const Embeddings& emb, std::span<const UserId> users,
                          const IdMatrix& items, const Matrix& grad, double eps) {
  const std::size_t d = emb.users.cols();
  Embeddings g{Matrix(emb.users.rows(), d), Matrix(emb.items.rows(), d)};
  std::vector<double> item_norm(emb.items.rows(), -1.0);
  std::vector<double> acc(d);
  for (std::size_t b = 0; b < items.rows(); ++b) {
    const auto uvec = emb.users.row(users[b]);
    const double nu_raw = std::sqrt(dot(uvec, uvec));
    const double nu = std::max(nu_raw, eps);
    std::fill(acc.begin(), acc.end(), 0.0);
    double proj = 0.0;  // sum_k g_k f_k
    for (std::size_t k = 0; k < items.cols(); ++k) {
      const double gk = grad(b, k);
      if (gk == 0.0) continue;
      const ItemId j = items(b, k);
      const auto vvec = emb.items.row(j);
      const double nv_raw = std::sqrt(dot(vvec, vvec));
      const double nv = std::max(nv_raw, eps);
      const double f = dot(uvec, vvec) / (nu * nv);
      // d f / d u = v / (|u||v|) - f u / |u|^2   (second term only off the guard)
      axpy(gk / (nu * nv), vvec, acc);
      if (nu_raw >= eps) proj += gk * f;
      // d f / d v = u / (|u||v|) - f v / |v|^2
      auto gv = g.items.row(j);
      axpy(gk / (nu * nv), uvec, gv);
      if (nv_raw >= eps) axpy(-gk * f / (nv * nv), vvec, gv);
    }
    auto gu = g.users.row(users[b]);
    axpy(1.0, acc, gu);
    if (proj != 0.0) axpy(-proj / (nu * nu), uvec, gu);
  }
  return g;
}

std::vector<ItemId> top_k_items(const Embeddings& emb, UserId user,
                                std::span<const char> excluded, std::size_t k, double eps) {
  const std::size_t ni = emb.items.rows();
  const auto uvec = emb.users.row(user);
  const double nu = guarded_norm(uvec, eps);
  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(ni);
  for (std::size_t j = 0; j < ni; ++j) {
    if (j < excluded.size() && excluded[j]) continue;
    const auto v = emb.items.row(j);
    scored.push_back({clamp_unit(dot(uvec, v) / (nu * guarded_norm(v, eps))),
                      static_cast<ItemId>(j)});
  }
  const auto before = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), before);
  std::vector<ItemId> ranked(take);
  for (std::size_t r = 0; r < take; ++r) ranked[r] = scored[r].second;
  return ranked;
}

std::vector<ItemId> score_all_items(const Embeddings& emb, UserId user,
                                    std::span<const ItemId> exclude, double eps) {
  std::vector<char> skip(emb.items.rows(), 0);
  for (ItemId j : exclude) {
    if (j < skip.size()) skip[j] = 1;
  }
  return top_k_items(emb, user, skip, skip.size(), eps);
}

namespace {

constexpr std::array<char, 8> kMagic{'D', 'S', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint64_t>(out, model.users.rows());
  put<std::uint64_t>(out, model.items.rows());
  put<std::uint64_t>(out, model.dim());
  put<std::uint32_t>(out, model.backbone.kind == BackboneKind::MF ? 0 : 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.backbone.layers));
  put<std::uint64_t>(out, model.seed);
  put<double>(out, model.norm_epsilon);
  out.write(reinterpret_cast<const char*>(model.users.flat().data()),
            static_cast<std::streamsize>(model.users.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(model.items.flat().data()),
            static_cast<std::streamsize>(model.items.size() * sizeof(double)));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error("not a checkpoint file: " + path.string());
  EmbeddingModel m;
  const auto nu = get<std::uint64_t>(in);
  const auto ni = get<std::uint64_t>(in);
  const auto d = get<std::uint64_t>(in);
  const auto tag = get<std::uint32_t>(in);
  if (tag > 1) throw Error("unknown backbone tag in checkpoint");
  m.backbone.kind = tag == 0 ? BackboneKind::MF : BackboneKind::GraphConv;
  m.backbone.layers = get<std::uint32_t>(in);
  m.seed = get<std::uint64_t>(in);
  m.norm_epsilon = get<double>(in);
  m.users = Matrix(nu, d);
  m.items = Matrix(ni, d);
  in.read(reinterpret_cast<char*>(m.users.flat().data()),
          static_cast<std::streamsize>(m.users.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(m.items.flat().data()),
          static_cast<std::streamsize>(m.items.size() * sizeof(double)));
  if (!in) throw Error("truncated checkpoint " + path.string());
  return m;
}

}  // namespace dslrec
