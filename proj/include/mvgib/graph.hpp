#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvgib/log.hpp"

namespace mvgib {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Undirected edge stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// One attributed, undirected, unweighted graph.
///
/// The adjacency is kept as a canonical sorted edge list, which makes the
/// symmetric / zero-diagonal / binary invariants hold by construction.
class Graph {
 public:
  Graph() = default;

  /// Pairs may be given in either orientation and may repeat; self-loops are
  /// dropped. `features` must have `node_count` rows (zero columns is allowed
  /// for graphs whose features are assigned later).
  Graph(int node_count, const std::vector<std::pair<int, int>>& pairs,
        Matrix features, int label)
      : node_count_(node_count), features_(std::move(features)), label_(label) {
    if (node_count <= 0) throw std::invalid_argument("graph must have at least one node");
    if (features_.rows() != node_count && !(features_.size() == 0)) {
      throw std::invalid_argument("feature rows (" + std::to_string(features_.rows()) +
                                  ") != node count (" + std::to_string(node_count) + ")");
    }
    if (features_.size() == 0) features_.resize(node_count, 0);
    edges_.reserve(pairs.size());
    for (auto [a, b] : pairs) {
      if (a < 0 || b < 0 || a >= node_count || b >= node_count) {
        throw std::out_of_range("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                ") outside node range");
      }
      if (a == b) continue;
      edges_.push_back(Edge{std::min(a, b), std::max(a, b)});
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  }

  int node_count() const noexcept { return node_count_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const Matrix& features() const noexcept { return features_; }
  int feature_dim() const noexcept { return static_cast<int>(features_.cols()); }
  int label() const noexcept { return label_; }

  bool has_edge(int a, int b) const {
    if (a == b) return false;
    Edge e{std::min(a, b), std::max(a, b)};
    return std::binary_search(edges_.begin(), edges_.end(), e);
  }

  std::vector<int> degrees() const {
    std::vector<int> deg(node_count_, 0);
    for (const auto& e : edges_) {
      ++deg[e.u];
      ++deg[e.v];
    }
    return deg;
  }

  Matrix dense_adjacency() const {
    Matrix a = Matrix::Zero(node_count_, node_count_);
    for (const auto& e : edges_) {
      a(e.u, e.v) = 1.0;
      a(e.v, e.u) = 1.0;
    }
    return a;
  }

  /// Same nodes, features and label; new edge set.
  Graph with_edges(const std::vector<Edge>& edges) const {
    return Graph(node_count_, to_pairs(edges), features_, label_);
  }

  Graph with_features(Matrix features) const {
    Graph g = *this;
    if (features.rows() != node_count_) throw std::invalid_argument("feature rows != node count");
    g.features_ = std::move(features);
    return g;
  }

  Graph with_label(int label) const {
    Graph g = *this;
    g.label_ = label;
    return g;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.node_count_ == b.node_count_ && a.label_ == b.label_ && a.edges_ == b.edges_ &&
           a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
           a.features_ == b.features_;
  }

 private:
  static std::vector<std::pair<int, int>> to_pairs(const std::vector<Edge>& edges) {
    std::vector<std::pair<int, int>> p;
    p.reserve(edges.size());
    for (const auto& e : edges) p.emplace_back(e.u, e.v);
    return p;
  }

  int node_count_ = 0;
  std::vector<Edge> edges_;
  Matrix features_;
  int label_ = 0;
};

/// Two views of one graph: same nodes and features, different adjacency.
struct MultiviewGraph {
  Graph view1;
  Graph view2;
  int shared_label = 0;

  static MultiviewGraph make(Graph view1, Graph view2) {
    if (view1.node_count() != view2.node_count()) {
      throw std::invalid_argument("views must share the node set");
    }
    if (view1.label() != view2.label()) throw std::invalid_argument("views must share the label");
    if (view1.features().rows() != view2.features().rows() ||
        view1.features().cols() != view2.features().cols() ||
        !(view1.features().array() == view2.features().array() ||
          (view1.features().array().isNaN() && view2.features().array().isNaN()))
             .all()) {
      throw std::invalid_argument("views must share node features");
    }
    int label = view1.label();
    return MultiviewGraph{std::move(view1), std::move(view2), label};
  }
};

/// Several graphs stacked into one block-diagonal graph.
struct GraphBatch {
  SparseMatrix adjacency;   // N_total x N_total, symmetric, block diagonal
  Matrix features;          // N_total x d
  std::vector<int> offsets; // graph g owns nodes [offsets[g], offsets[g+1])
  std::vector<int> labels;

  int graph_count() const noexcept { return static_cast<int>(labels.size()); }
  int node_count() const noexcept { return offsets.empty() ? 0 : offsets.back(); }
  int graph_size(int g) const { return offsets[g + 1] - offsets[g]; }

  /// Dense adjacency of graph g alone.
  Matrix dense_block(int g) const {
    const int start = offsets[g];
    const int n = graph_size(g);
    Matrix a = Matrix::Zero(n, n);
    for (int c = start; c < start + n; ++c) {
      for (SparseMatrix::InnerIterator it(adjacency, c); it; ++it) {
        a(it.row() - start, c - start) = it.value();
      }
    }
    return a;
  }

  std::size_t edge_count() const { return static_cast<std::size_t>(adjacency.nonZeros() / 2); }
};

/// Summary statistics of a loaded dataset.
struct DatasetMeta {
  std::string name;
  int graph_count = 0;
  int num_classes = 0;
  int feature_dim = 0;
  int max_degree = 0;
  std::vector<int> original_labels;  // original_labels[c] is the file label of class c
};

inline int max_degree(std::span<const Graph> graphs) {
  int m = 0;
  for (const auto& g : graphs) {
    for (int d : g.degrees()) m = std::max(m, d);
  }
  return m;
}

/// Assigns one-hot degree features when the dataset has none.
///
/// Feature dimension is the dataset-wide maximum degree plus one. A positive
/// `cap` clips degrees at `cap` (dimension `cap + 1`) for datasets with
/// heavy-tailed degree distributions.
inline std::vector<Graph> degree_onehot_features(std::vector<Graph> graphs, int cap = 0) {
  const bool has_features = std::any_of(graphs.begin(), graphs.end(),
                                        [](const Graph& g) { return g.feature_dim() > 0; });
  if (has_features || graphs.empty()) return graphs;
  int dmax = max_degree(graphs);
  if (cap > 0) dmax = std::min(dmax, cap);
  for (auto& g : graphs) {
    Matrix f = Matrix::Zero(g.node_count(), dmax + 1);
    auto deg = g.degrees();
    for (int v = 0; v < g.node_count(); ++v) f(v, std::min(deg[v], dmax)) = 1.0;
    g = g.with_features(std::move(f));
  }
  return graphs;
}

namespace detail {
inline GraphBatch stack(std::span<const Graph* const> graphs) {
  if (graphs.empty()) throw std::invalid_argument("cannot batch an empty list of graphs");
  const int d = graphs.front()->feature_dim();
  GraphBatch batch;
  batch.offsets.reserve(graphs.size() + 1);
  batch.offsets.push_back(0);
  for (const Graph* g : graphs) {
    if (g->feature_dim() != d) throw std::invalid_argument("feature dimension mismatch in batch");
    batch.offsets.push_back(batch.offsets.back() + g->node_count());
    batch.labels.push_back(g->label());
  }
  const int total = batch.offsets.back();
  batch.features.resize(total, d);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Graph& g = *graphs[i];
    const int off = batch.offsets[i];
    if (d > 0) batch.features.middleRows(off, g.node_count()) = g.features();
    for (const auto& e : g.edges()) {
      trips.emplace_back(off + e.u, off + e.v, 1.0);
      trips.emplace_back(off + e.v, off + e.u, 1.0);
    }
  }
  batch.adjacency.resize(total, total);
  batch.adjacency.setFromTriplets(trips.begin(), trips.end());
  batch.adjacency.makeCompressed();
  return batch;
}
}  // namespace detail

inline GraphBatch batch_graphs(std::span<const Graph> graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const auto& g : graphs) ptrs.push_back(&g);
  return detail::stack(ptrs);
}

/// Batches both views; the two batches share offsets and features.
inline std::pair<GraphBatch, GraphBatch> batch_graphs(std::span<const MultiviewGraph> views) {
  std::vector<const Graph*> v1, v2;
  v1.reserve(views.size());
  v2.reserve(views.size());
  for (const auto& mv : views) {
    v1.push_back(&mv.view1);
    v2.push_back(&mv.view2);
  }
  return {detail::stack(v1), detail::stack(v2)};
}

/// Batches the multiview graphs at the given indices.
inline std::pair<GraphBatch, GraphBatch> batch_graphs(std::span<const MultiviewGraph> views,
                                                      std::span<const int> indices) {
  std::vector<const Graph*> v1, v2;
  for (int i : indices) {
    v1.push_back(&views[i].view1);
    v2.push_back(&views[i].view2);
  }
  return {detail::stack(v1), detail::stack(v2)};
}

struct Fold {
  std::vector<int> train;
  std::vector<int> test;
};

/// k folds, stratified by label when every class has at least k members.
///
/// Indices are shuffled within each class, classes are laid out one after
/// another and position p goes to fold p mod k, so fold sizes differ by at
/// most one and class proportions are preserved.
inline std::vector<Fold> split_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
  const int n = static_cast<int>(labels.size());
  if (n < k) throw std::invalid_argument("split_folds: fewer items than folds");
  std::mt19937_64 rng(seed);

  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::vector<int> order;
  order.reserve(n);
  bool stratified = true;
  for (int c : classes) {
    if (std::count(labels.begin(), labels.end(), c) < k) stratified = false;
  }
  if (stratified) {
    for (int c : classes) {
      std::vector<int> members;
      for (int i = 0; i < n; ++i)
        if (labels[i] == c) members.push_back(i);
      std::shuffle(members.begin(), members.end(), rng);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    log::warn("split_folds: a class has fewer than " + std::to_string(k) +
              " members; using an unstratified split");
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<int> fold_of(n);
  for (int p = 0; p < n; ++p) fold_of[order[p]] = p % k;
  std::vector<Fold> folds(k);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < k; ++f) {
      (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

}  // namespace mvgib
