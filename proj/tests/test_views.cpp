#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace mvgib;
using namespace mvgib::testing;

namespace {

// Brute-force ranking: explicit cosine loops and a full sort.
std::set<Edge> brute_force_dknn(const Graph& g, int k, int dilation) {
  const int n = g.node_count();
  const Matrix& x = g.features();
  std::set<Edge> edges;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> cand;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0, ni = 0, nj = 0;
      for (int c = 0; c < x.cols(); ++c) {
        dot += x(i, c) * x(j, c);
        ni += x(i, c) * x(i, c);
        nj += x(j, c) * x(j, c);
      }
      const double sim = (ni > 0 && nj > 0) ? dot / std::sqrt(ni * nj) : 0.0;
      cand.emplace_back(-sim, j);
    }
    std::sort(cand.begin(), cand.end());
    for (int r = dilation; r < k; ++r) {
      const int j = cand[r].second;
      edges.insert(Edge{std::min(i, j), std::max(i, j)});
    }
  }
  return edges;
}

std::set<Edge> edge_set(const Graph& g) { return {g.edges().begin(), g.edges().end()}; }

Matrix neumann_ppr(const Graph& g, double alpha, bool self_loops) {
  Matrix a = g.dense_adjacency();
  if (self_loops) a.diagonal().array() += 1.0;
  const Eigen::VectorXd deg = a.rowwise().sum();
  Matrix norm = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      norm(i, j) = (deg[i] > 0 && deg[j] > 0) ? a(i, j) / std::sqrt(deg[i] * deg[j]) : 0.0;
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int t = 0; t < 3000; ++t) {
    term = (1.0 - alpha) * norm * term;
    sum += term;
  }
  return alpha * sum;
}

}  // namespace

TEST(KnnView, OrthogonalFeatureExample) {
  Graph g(3, std::vector<std::pair<int, int>>{}, (Matrix(3, 2) << 1, 0, 1, 0, 0, 1).finished(), 0);
  const Graph v = knn_view(g, 1);
  // Nodes 0 and 1 pick each other; node 2 is equally (un)similar to both and
  // takes the lower index.
  EXPECT_EQ(edge_set(v), (std::set<Edge>{{0, 1}, {0, 2}}));
  EXPECT_EQ(edge_set(v), brute_force_dknn(g, 1, 0));
  EXPECT_EQ(v.features(), g.features());
  EXPECT_EQ(v.label(), g.label());
}

TEST(KnnView, IdenticalFeaturesTieBreakByLowerIndex) {
  Graph g(4, std::vector<std::pair<int, int>>{}, Matrix::Ones(4, 3), 0);
  const auto out = dilated_neighbours(g, 1, 0);
  EXPECT_EQ(out[0], std::vector<int>{1});
  for (int i = 1; i < 4; ++i) EXPECT_EQ(out[i], std::vector<int>{0});
}

TEST(KnnView, FullNeighbourhoodGivesCompleteGraph) {
  std::mt19937_64 rng(5);
  const Graph g = random_graph(7, 0.2, 3, 0, rng);
  EXPECT_EQ(knn_view(g, 6).edge_count(), 21u);
}

TEST(KnnView, OversizedKClampsWithWarning) {
  std::mt19937_64 rng(5);
  const Graph g = random_graph(4, 0.2, 3, 0, rng);
  WarningCapture w;
  const Graph v = knn_view(g, 10);
  EXPECT_EQ(v.edge_count(), 6u);
  EXPECT_EQ(w.messages.size(), 1u);
}

TEST(KnnView, MatchesBruteForceOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = random_graph(9, 0.3, 4, 0, rng);
    for (int k : {1, 3, 5}) ASSERT_EQ(edge_set(knn_view(g, k)), brute_force_dknn(g, k, 0));
    ASSERT_EQ(edge_set(dknn_view(g, 6, 2)), brute_force_dknn(g, 6, 2));
  }
}

TEST(KnnView, ZeroFeatureRowsHaveZeroSimilarity) {
  Matrix x(3, 2);
  x << 0, 0, 1, 0, 1, 1;
  const Matrix s = cosine_similarity(x);
  EXPECT_EQ(s(0, 1), 0.0);
  EXPECT_EQ(s(0, 2), 0.0);
  EXPECT_NEAR(s(1, 2), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(DknnView, ZeroDilationEqualsKnn) {
  std::mt19937_64 rng(23);
  const Graph g = random_graph(8, 0.3, 3, 0, rng);
  EXPECT_EQ(dknn_view(g, 3, 0).edges(), knn_view(g, 3).edges());
}

TEST(DknnView, KeepsSecondMostSimilarNeighbour) {
  // Features on the unit circle at strictly increasing angles, so every
  // node's similarity ranking is strict.
  Matrix x(4, 2);
  const double angles[] = {0.0, 0.3, 0.9, 2.0};
  for (int i = 0; i < 4; ++i) x.row(i) << std::cos(angles[i]), std::sin(angles[i]);
  Graph g(4, std::vector<std::pair<int, int>>{}, x, 0);
  const auto out = dilated_neighbours(g, 2, 1);
  // Ranked neighbours by angular distance:
  // 0: 1 (0.3), 2 (0.9), 3 (2.0)   1: 0 (0.3), 2 (0.6), 3 (1.7)
  // 2: 1 (0.6), 0 (0.9), 3 (1.1)   3: 2 (1.1), 1 (1.7), 0 (2.0)
  EXPECT_EQ(out[0], std::vector<int>{2});
  EXPECT_EQ(out[1], std::vector<int>{2});
  EXPECT_EQ(out[2], std::vector<int>{0});
  EXPECT_EQ(out[3], std::vector<int>{1});
}

TEST(DknnView, OutDegreeEqualsKMinusDilation) {
  std::mt19937_64 rng(29);
  for (int n : {3, 6, 12}) {
    const Graph g = random_graph(n, 0.3, 3, 0, rng);
    for (int k : {1, 2, 4, 7})
      for (int d = 0; d < k; ++d) {
        bool clamped = false;
        const auto out = dilated_neighbours(g, k, d, &clamped);
        for (const auto& nb : out) {
          ASSERT_EQ(static_cast<int>(nb.size()), std::min(k - d, n - 1)) << "n=" << n << " k=" << k << " d=" << d;
          ASSERT_EQ(std::set<int>(nb.begin(), nb.end()).size(), nb.size());
        }
      }
  }
}

TEST(DknnView, MaximalDilationLeavesOneNeighbour) {
  std::mt19937_64 rng(31);
  const Graph g = random_graph(10, 0.3, 3, 0, rng);
  for (const auto& nb : dilated_neighbours(g, 5, 4)) EXPECT_EQ(nb.size(), 1u);
}

TEST(ViewSpec, ValidatesParameters) {
  EXPECT_THROW((ViewSpec{ViewKind::Knn, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((ViewSpec{ViewKind::Dknn, 3, 3}.validate()), std::invalid_argument);
  EXPECT_THROW((ViewSpec{ViewKind::Ppr, 5, 0, 1.0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ViewSpec{ViewKind::Dknn, 10, 5}.validate()));
  EXPECT_THROW(parse_view_kind("heat"), std::invalid_argument);
  EXPECT_EQ(parse_view_kind("DKNN"), ViewKind::Dknn);
}

TEST(PprView, IsolatedNode) {
  const Graph g(1, std::vector<std::pair<int, int>>{}, Matrix::Ones(1, 1), 0);
  const Matrix s = ppr_matrix(g, 0.15);
  ASSERT_EQ(s.rows(), 1);
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
}

TEST(PprView, TwoNodePathWithoutSelfLoops) {
  const Matrix s = ppr_matrix(path_graph(2), 0.15, /*self_loops=*/false);
  // (I - 0.85 [[0,1],[1,0]])^-1 = [[1, .85], [.85, 1]] / (1 - .85^2)
  const double det = 1.0 - 0.85 * 0.85;
  EXPECT_NEAR(s(0, 0), 0.15 / det, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.15 * 0.85 / det, 1e-12);
  EXPECT_NEAR(s(0, 0), 0.5405, 5e-5);
  EXPECT_NEAR(s(1, 0), 0.4595, 5e-5);
}

TEST(PprView, MatchesNeumannSeries) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(7, 0.35, 2, 0, rng);
    for (bool loops : {true, false}) {
      const Matrix expect = neumann_ppr(g, 0.15, loops);
      EXPECT_LT((ppr_matrix(g, 0.15, loops) - expect).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(PprView, EntriesNonnegativeAndFinite) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const Graph g = random_graph(3 + trial % 12, 0.25, 2, 0, rng);
    for (bool loops : {true, false}) {
      const Matrix s = ppr_matrix(g, 0.15, loops);
      ASSERT_TRUE(s.allFinite());
      ASSERT_GE(s.minCoeff(), -1e-12);
    }
  }
}

TEST(PprView, PermutationEquivariant) {
  std::mt19937_64 rng(43);
  int views_checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Graph g = random_graph(8, 0.35, 2, 0, rng);
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Graph pg = permute_nodes(g, perm);
    const Matrix s = ppr_matrix(g, 0.15);
    const Matrix ps = ppr_matrix(pg, 0.15);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) ASSERT_NEAR(ps(perm[i], perm[j]), s(i, j), 1e-12);

    // View equivariance is only well defined when no row has a tie at the
    // top-k cutoff (ties are broken by index).
    const int k = 3;
    bool ties = false;
    for (int i = 0; i < 8 && !ties; ++i) {
      std::vector<double> row;
      for (int j = 0; j < 8; ++j)
        if (j != i) row.push_back(s(i, j));
      std::sort(row.rbegin(), row.rend());
      ties = std::abs(row[k - 1] - row[k]) < 1e-9;
    }
    if (ties) continue;
    ++views_checked;
    EXPECT_TRUE(ppr_view(pg, 0.15, k) == permute_nodes(ppr_view(g, 0.15, k), perm));
  }
  EXPECT_GT(views_checked, 5);
}

TEST(PprView, KeepsTopEntriesPerRow) {
  std::mt19937_64 rng(47);
  const Graph g = random_graph(10, 0.3, 2, 0, rng);
  const Graph v = ppr_view(g, 0.15, 2);
  for (int d : v.degrees()) EXPECT_GE(d, 2);
}

TEST(Perturb, RemoveHalfOfFourEdges) {
  const Graph g = path_graph(5);
  ASSERT_EQ(g.edge_count(), 4u);
  const Graph p = perturb_edges(g, 0.5, PerturbMode::Remove, 3);
  EXPECT_EQ(p.edge_count(), 2u);
  for (const auto& e : p.edges()) EXPECT_TRUE(g.has_edge(e.u, e.v));
}

TEST(Perturb, ZeroRateIsIdentity) {
  std::mt19937_64 rng(53);
  const Graph g = random_graph(8, 0.4, 2, 1, rng);
  EXPECT_TRUE(perturb_edges(g, 0.0, PerturbMode::Add, 1) == g);
  EXPECT_TRUE(perturb_edges(g, 0.0, PerturbMode::Remove, 1) == g);
}

TEST(Perturb, CompleteGraphAddWarnsAndIsUnchanged) {
  std::vector<std::pair<int, int>> all;
  for (int u = 0; u < 5; ++u)
    for (int v = u + 1; v < 5; ++v) all.emplace_back(u, v);
  const Graph g(5, all, Matrix::Ones(5, 1), 0);
  WarningCapture w;
  EXPECT_TRUE(perturb_edges(g, 0.5, PerturbMode::Add, 9) == g);
  EXPECT_EQ(w.messages.size(), 1u);
}

TEST(Perturb, EdgeCountsFollowRoundedRate) {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 30; ++trial) {
    const Graph g = random_graph(12, 0.3, 2, 0, rng);
    for (double rate : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      const auto m = static_cast<long>(g.edge_count());
      const long change = std::llround(rate * static_cast<double>(m));
      const Graph removed = perturb_edges(g, rate, PerturbMode::Remove, trial);
      ASSERT_EQ(static_cast<long>(removed.edge_count()), m - change);
      const long pool = 66 - m;
      const Graph added = perturb_edges(g, rate, PerturbMode::Add, trial);
      ASSERT_EQ(static_cast<long>(added.edge_count()), m + std::min(change, pool));
      for (const auto& e : g.edges()) ASSERT_TRUE(added.has_edge(e.u, e.v));
    }
  }
}

TEST(Perturb, DeterministicUnderSeed) {
  std::mt19937_64 rng(61);
  const Graph g = random_graph(12, 0.3, 2, 0, rng);
  EXPECT_TRUE(perturb_edges(g, 0.5, PerturbMode::Add, 4) == perturb_edges(g, 0.5, PerturbMode::Add, 4));
  EXPECT_TRUE(perturb_edges(g, 0.5, PerturbMode::Remove, 4) == perturb_edges(g, 0.5, PerturbMode::Remove, 4));
}

TEST(Multiview, BuildsBothViewsAndReportsClampOnce) {
  std::mt19937_64 rng(67);
  std::vector<Graph> gs;
  for (int i = 0; i < 4; ++i) gs.push_back(random_graph(3, 0.5, 2, i % 2, rng));
  WarningCapture w;
  const auto views = build_multiview(gs, ViewSpec{ViewKind::Adj}, ViewSpec{ViewKind::Knn, 5});
  ASSERT_EQ(views.size(), 4u);
  EXPECT_EQ(w.messages.size(), 1u);
  for (std::size_t i = 0; i < views.size(); ++i) {
    EXPECT_TRUE(views[i].view1 == gs[i]);
    EXPECT_EQ(views[i].view2.edge_count(), 3u);
  }
}
