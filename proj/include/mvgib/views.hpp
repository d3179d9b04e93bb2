#pragma once

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvgib/graph.hpp"
#include "mvgib/log.hpp"

namespace mvgib {

enum class ViewKind { Adj, Knn, Dknn, Ppr };

inline std::string to_string(ViewKind k) {
  switch (k) {
    case ViewKind::Adj: return "adj";
    case ViewKind::Knn: return "knn";
    case ViewKind::Dknn: return "dknn";
    case ViewKind::Ppr: return "ppr";
  }
  return "?";
}

inline ViewKind parse_view_kind(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "adj") return ViewKind::Adj;
  if (s == "knn") return ViewKind::Knn;
  if (s == "dknn") return ViewKind::Dknn;
  if (s == "ppr") return ViewKind::Ppr;
  throw std::invalid_argument("unknown view kind '" + s + "' (expected adj, knn, dknn or ppr)");
}

/// How to derive one view from the original graph.
struct ViewSpec {
  ViewKind kind = ViewKind::Adj;
  int k = 5;          // KNN / DKNN neighbourhood size
  int dilation = 0;   // DKNN: number of most similar nodes skipped
  double alpha = 0.15;
  int ppr_top_k = 5;
  bool ppr_self_loops = true;

  void validate() const {
    if ((kind == ViewKind::Knn || kind == ViewKind::Dknn) && k < 1)
      throw std::invalid_argument("view: k must be positive");
    if (kind == ViewKind::Dknn && (dilation < 0 || dilation >= k))
      throw std::invalid_argument("view: dilation must satisfy 0 <= dilation < k");
    if (kind == ViewKind::Ppr && !(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("view: alpha must lie in (0, 1)");
    if (kind == ViewKind::Ppr && ppr_top_k < 1)
      throw std::invalid_argument("view: ppr_top_k must be positive");
  }
};

/// Cosine similarity between node feature rows; all-zero rows have similarity
/// 0 with every node.
inline Matrix cosine_similarity(const Matrix& x) {
  Matrix normed = x;
  for (Eigen::Index r = 0; r < normed.rows(); ++r) {
    const double norm = normed.row(r).norm();
    if (norm > 0.0) normed.row(r) /= norm;
  }
  return normed * normed.transpose();
}

namespace detail {

// Indices of the other nodes sorted by descending score, ties by index.
inline std::vector<int> ranked_others(const Matrix& score, int node) {
  std::vector<int> order;
  order.reserve(score.cols() - 1);
  for (int j = 0; j < score.cols(); ++j)
    if (j != node) order.push_back(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score(node, a) > score(node, b); });
  return order;
}

inline std::vector<Edge> union_symmetrize(const std::vector<std::vector<int>>& out) {
  std::vector<Edge> edges;
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    for (int j : out[i]) edges.push_back(Edge{std::min(i, j), std::max(i, j)});
  }
  return edges;
}

}  // namespace detail

/// Per-node neighbour lists before symmetrization: for each node the
/// candidates ranked by cosine similarity, skipping the `dilation` best and
/// keeping the next `k - dilation`.
///
/// When the graph has fewer than k + 1 nodes, k is clamped to n - 1 and the
/// skip is reduced so that every node keeps min(k - dilation, n - 1)
/// neighbours. `clamped`, when given, records whether that happened instead
/// of emitting a warning.
inline std::vector<std::vector<int>> dilated_neighbours(const Graph& graph, int k, int dilation,
                                                        bool* clamped = nullptr) {
  if (k < 1) throw std::invalid_argument("knn: k must be positive");
  if (dilation < 0 || dilation >= k) throw std::invalid_argument("knn: need 0 <= dilation < k");
  const int n = graph.node_count();
  const bool clamp = k >= n;
  if (clamp) {
    if (clamped) *clamped = true;
    else log::warn("knn: k=" + std::to_string(k) + " >= node count " + std::to_string(n) +
                   "; clamping to " + std::to_string(n - 1));
  }
  const int keep = std::min(k - dilation, n - 1);
  const int skip = std::min(dilation, n - 1 - keep);
  const Matrix sim = cosine_similarity(graph.features());
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    auto ranked = detail::ranked_others(sim, i);
    out[i].assign(ranked.begin() + skip, ranked.begin() + skip + keep);
  }
  return out;
}

inline Graph dknn_view(const Graph& graph, int k, int dilation, bool* clamped = nullptr) {
  return graph.with_edges(detail::union_symmetrize(dilated_neighbours(graph, k, dilation, clamped)));
}

inline Graph knn_view(const Graph& graph, int k, bool* clamped = nullptr) {
  return dknn_view(graph, k, 0, clamped);
}

/// Dense personalized-PageRank diffusion
///   S = alpha * (I - (1 - alpha) * D^-1/2 (A + I) D^-1/2)^-1
/// with D the degree matrix of A + I. With `self_loops = false` the identity
/// is not added before normalizing (isolated nodes then normalize to 0).
inline Matrix ppr_matrix(const Graph& graph, double alpha, bool self_loops = true) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ppr: alpha must lie in (0, 1)");
  const int n = graph.node_count();
  Matrix a = graph.dense_adjacency();
  if (self_loops) a.diagonal().array() += 1.0;
  Vector inv_sqrt_deg = a.rowwise().sum();
  for (int i = 0; i < n; ++i) inv_sqrt_deg[i] = inv_sqrt_deg[i] > 0 ? 1.0 / std::sqrt(inv_sqrt_deg[i]) : 0.0;
  const Matrix norm = inv_sqrt_deg.asDiagonal() * a * inv_sqrt_deg.asDiagonal();
  const Matrix system = Matrix::Identity(n, n) - (1.0 - alpha) * norm;
  Eigen::PartialPivLU<Matrix> lu(system);
  // The spectral radius of (1 - alpha) * norm is below one, so the system is
  // always nonsingular.
  return alpha * lu.solve(Matrix::Identity(n, n));
}

/// Binarized PPR view: per row keep the `top_k` largest off-diagonal entries
/// (ties by lower index), then symmetrize by union.
inline Graph ppr_view(const Graph& graph, double alpha, int top_k, bool self_loops = true) {
  if (top_k < 1) throw std::invalid_argument("ppr: top_k must be positive");
  const Matrix s = ppr_matrix(graph, alpha, self_loops);
  const int n = graph.node_count();
  const int keep = std::min(top_k, n - 1);
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    auto ranked = detail::ranked_others(s, i);
    out[i].assign(ranked.begin(), ranked.begin() + keep);
  }
  return graph.with_edges(detail::union_symmetrize(out));
}

enum class PerturbMode { Add, Remove };

inline PerturbMode parse_perturb_mode(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "add") return PerturbMode::Add;
  if (s == "remove") return PerturbMode::Remove;
  throw std::invalid_argument("unknown perturbation mode '" + s + "' (expected add or remove)");
}

inline std::string to_string(PerturbMode m) { return m == PerturbMode::Add ? "add" : "remove"; }

/// Adds or removes round(rate * |E|) uniformly chosen edges.
inline Graph perturb_edges(const Graph& graph, double rate, PerturbMode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("perturb: rate must lie in [0, 1]");
  const auto& edges = graph.edges();
  const std::size_t count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(edges.size())));
  if (count == 0) return graph;
  std::mt19937_64 rng(seed);

  if (mode == PerturbMode::Remove) {
    std::vector<Edge> kept = edges;
    std::shuffle(kept.begin(), kept.end(), rng);
    kept.resize(kept.size() - count);
    return graph.with_edges(kept);
  }

  std::vector<Edge> pool;
  const int n = graph.node_count();
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (!graph.has_edge(u, v)) pool.push_back(Edge{u, v});
  std::vector<Edge> result = edges;
  if (pool.size() < count) {
    log::warn("perturb: requested " + std::to_string(count) + " new edges but only " +
              std::to_string(pool.size()) + " non-edges exist; adding all of them");
    result.insert(result.end(), pool.begin(), pool.end());
  } else {
    std::shuffle(pool.begin(), pool.end(), rng);
    result.insert(result.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  }
  return graph.with_edges(result);
}

inline Graph build_view(const Graph& graph, const ViewSpec& spec, bool* clamped = nullptr) {
  spec.validate();
  switch (spec.kind) {
    case ViewKind::Adj: return graph;
    case ViewKind::Knn: return knn_view(graph, spec.k, clamped);
    case ViewKind::Dknn: return dknn_view(graph, spec.k, spec.dilation, clamped);
    case ViewKind::Ppr: return ppr_view(graph, spec.alpha, spec.ppr_top_k, spec.ppr_self_loops);
  }
  return graph;
}

/// Builds both views for every graph. Clamping of k on small graphs is
/// reported once for the whole dataset.
inline std::vector<MultiviewGraph> build_multiview(std::span<const Graph> graphs,
                                                   const ViewSpec& first, const ViewSpec& second) {
  std::vector<MultiviewGraph> out;
  out.reserve(graphs.size());
  int clamped_graphs = 0;
  for (const auto& g : graphs) {
    bool clamped = false;
    Graph v1 = build_view(g, first, &clamped);
    Graph v2 = build_view(g, second, &clamped);
    clamped_graphs += clamped ? 1 : 0;
    out.push_back(MultiviewGraph::make(std::move(v1), std::move(v2)));
  }
  if (clamped_graphs > 0) {
    log::warn("knn: k clamped to node_count - 1 on " + std::to_string(clamped_graphs) + " graph(s)");
  }
  return out;
}

}  // namespace mvgib
