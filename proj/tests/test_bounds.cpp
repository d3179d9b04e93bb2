#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mvgib;
using namespace mvgib::testing;

namespace {

Matrix randn(int rows, int cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

GaussianParams gaussian(Matrix mean, Matrix log_std) {
  GaussianParams q;
  q.mean = std::move(mean);
  q.log_std = std::move(log_std);
  q.std = q.log_std.array().exp().matrix();
  q.active = Matrix::Ones(q.mean.rows(), q.mean.cols());
  return q;
}

double naive_adjacency_ll(const Matrix& a, const Matrix& z) {
  double ll = 0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      double dot = 0;
      for (int c = 0; c < z.cols(); ++c) dot += z(i, c) * z(j, c);
      const double p = 1.0 / (1.0 + std::exp(-dot));
      ll += a(i, j) > 0 ? std::log(p) : std::log(1.0 - p);
    }
  return ll;
}

// Double-loop CLUB estimate straight from its definition.
double naive_club(const Matrix& z, const Matrix& mu, const Matrix& log_std) {
  const int n = static_cast<int>(z.rows());
  auto logq = [&](int latent_row, int cond_row) {
    double s = 0;
    for (int c = 0; c < z.cols(); ++c) {
      const double d = z(latent_row, c) - mu(cond_row, c);
      s += -0.5 * d * d * std::exp(-2 * log_std(cond_row, c));
    }
    return s;
  };
  double pos = 0, neg = 0;
  for (int i = 0; i < n; ++i) {
    pos += logq(i, i) / n;
    for (int j = 0; j < n; ++j) neg += logq(j, i) / (double(n) * n);
  }
  return pos - neg;
}

template <typename F>
double central_difference(Matrix& m, Eigen::Index i, F&& f, double h = 1e-6) {
  const double keep = m.data()[i];
  m.data()[i] = keep + h;
  const double up = f();
  m.data()[i] = keep - h;
  const double down = f();
  m.data()[i] = keep;
  return (up - down) / (2 * h);
}

GraphBatch single(const Graph& g) { return batch_graphs(std::span<const Graph>(&g, 1)); }

}  // namespace

TEST(AdjacencyLikelihood, ZeroLatentsScoreLogHalfPerEntry) {
  std::mt19937_64 rng(1);
  for (int n : {1, 4, 9}) {
    const Graph g = random_graph(n, 0.4, 2, 0, rng);
    const double ll = adjacency_log_likelihood(g.dense_adjacency(), Matrix::Zero(n, 3), 1e-7);
    EXPECT_NEAR(ll, n * n * std::log(0.5), 1e-10);
  }
}

TEST(AdjacencyLikelihood, MatchesEntrywiseOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = random_graph(7, 0.4, 2, 0, rng);
    const Matrix z = randn(7, 4, rng, 0.5);
    EXPECT_NEAR(adjacency_log_likelihood(g.dense_adjacency(), z, 1e-12), naive_adjacency_ll(g.dense_adjacency(), z),
                1e-9);
  }
}

TEST(AdjacencyLikelihood, ClampKeepsSaturatedLogitsFinite) {
  const Matrix z = Matrix::Constant(2, 1, 40.0);
  const Matrix target = Matrix::Zero(2, 2);
  const double ll = adjacency_log_likelihood(target, z, 1e-7);
  EXPECT_TRUE(std::isfinite(ll));
  EXPECT_NEAR(ll, 4 * std::log(1e-7), 1e-6);
  Matrix dz = Matrix::Zero(2, 1);
  adjacency_log_likelihood(target, z, 1e-7, 1.0, &dz);
  EXPECT_EQ(dz.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AdjacencyLikelihood, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Graph g = random_graph(6, 0.4, 2, 0, rng);
  const Matrix a = g.dense_adjacency();
  Matrix z = randn(6, 3, rng, 0.7);
  Matrix dz = Matrix::Zero(6, 3);
  adjacency_log_likelihood(a, z, 1e-7, 1.0, &dz);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double fd = central_difference(z, i, [&] { return adjacency_log_likelihood(a, z, 1e-7); });
    EXPECT_NEAR(dz.data()[i], fd, 1e-6);
  }
}

TEST(ReconBound, AveragesAdjacencyAndFeatureTerms) {
  std::mt19937_64 rng(7);
  std::vector<Graph> gs = {random_graph(4, 0.5, 3, 0, rng), random_graph(6, 0.5, 3, 1, rng)};
  const GraphBatch b = batch_graphs(std::span<const Graph>(gs));
  const Matrix z = randn(10, 5, rng, 0.4);
  FeatureDecoder dec("dec", 5, 3, rng);
  const BoundEstimate est = recon_lower_bound(b, z, dec, "recon_h1");
  double adj = naive_adjacency_ll(gs[0].dense_adjacency(), z.topRows(4)) +
               naive_adjacency_ll(gs[1].dense_adjacency(), z.bottomRows(6));
  const Matrix recon = decode_features(z, dec);
  double feat = 0;
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 3; ++c) {
      const double d = b.features(r, c) - recon(r, c);
      feat += -0.5 * d * d - 0.5 * std::log(2 * M_PI);
    }
  EXPECT_NEAR(est.adjacency_part, adj / 2, 1e-9);
  EXPECT_NEAR(est.feature_part, feat / 2, 1e-9);
  EXPECT_NEAR(est.value, (adj + feat) / 2, 1e-9);
  EXPECT_EQ(est.kind, BoundKind::Lower);
  EXPECT_EQ(est.term_id, "recon_h1");

  ReconOptions no_feat;
  no_feat.feature_term = false;
  EXPECT_NEAR(recon_lower_bound(b, z, dec, "r", no_feat).value, adj / 2, 1e-9);
}

TEST(ReconBound, CrossEqualsReconWhenViewsCoincide) {
  std::mt19937_64 rng(9);
  const Graph g = random_graph(7, 0.4, 2, 0, rng);
  const Matrix z = randn(7, 3, rng, 0.5);
  FeatureDecoder dec("dec", 3, 2, rng);
  EXPECT_EQ(cross_recon_lower_bound(single(g), z, dec).value, recon_lower_bound(single(g), z, dec).value);
  EXPECT_THROW(cross_recon_lower_bound(single(g), Matrix::Zero(6, 3), dec), std::invalid_argument);
}

TEST(ReconBound, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::vector<Graph> gs = {random_graph(4, 0.5, 2, 0, rng), random_graph(5, 0.5, 2, 1, rng)};
  const GraphBatch b = batch_graphs(std::span<const Graph>(gs));
  Matrix z = randn(9, 3, rng, 0.5);
  FeatureDecoder dec("dec", 3, 2, rng);
  ParamList params;
  dec.append_params(params);
  for (Param* p : params) p->zero_grad();
  const double scale = -0.7;
  Matrix dz = Matrix::Zero(9, 3);
  recon_lower_bound(b, z, dec, "r", {}, scale, &dz);
  auto value = [&] { return scale * recon_lower_bound(b, z, dec).value; };
  for (Eigen::Index i = 0; i < z.size(); ++i) EXPECT_NEAR(dz.data()[i], central_difference(z, i, value), 1e-6);
  for (Param* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      EXPECT_NEAR(p->grad.data()[i], central_difference(p->value, i, value), 1e-6) << p->name;
}

TEST(ReconBound, TrainingDecoderIncreasesBoundNearlyMonotonically) {
  std::mt19937_64 rng(13);
  const Graph g = random_graph(8, 0.4, 3, 0, rng);
  const GraphBatch b = single(g);
  const Matrix z = randn(8, 6, rng, 0.5);
  FeatureDecoder dec("dec", 6, 3, rng);
  ParamList params;
  dec.append_params(params);
  Adam adam(params);
  Matrix unused = Matrix::Zero(8, 6);
  double previous = recon_lower_bound(b, z, dec).value;
  const double first = previous;
  int decreases = 0;
  for (int step = 0; step < 200; ++step) {
    adam.zero_grad();
    recon_lower_bound(b, z, dec, "r", {}, -1.0, &unused);
    adam.step(0.01);
    const double now = recon_lower_bound(b, z, dec).value;
    if (now < previous - 1e-9) ++decreases;
    previous = now;
  }
  EXPECT_GT(previous, first);
  EXPECT_LE(decreases, 10);  // at most 5% of steps
}

TEST(ReconBound, TrainedLatentsReproduceOffDiagonalAdjacency) {
  std::mt19937_64 rng(13);
  const Graph g = random_graph(8, 0.4, 3, 0, rng);
  const GraphBatch b = single(g);
  Param z("z", randn(8, 6, rng, 0.1));
  FeatureDecoder dec("dec", 6, 3, rng);
  ParamList params{&z};
  dec.append_params(params);
  Adam adam(params);
  const double first = recon_lower_bound(b, z.value, dec).value;
  for (int step = 0; step < 400; ++step) {
    adam.zero_grad();
    recon_lower_bound(b, z.value, dec, "r", {}, -1.0, &z.grad);
    adam.step(0.02);
  }
  EXPECT_GT(recon_lower_bound(b, z.value, dec).value, first + 10.0);
  const Matrix p = decode_adjacency(z.value);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != j) EXPECT_EQ(p(i, j) > 0.5, g.has_edge(i, j)) << i << "," << j;
}

TEST(Club, SingleSampleIsZero) {
  std::mt19937_64 rng(15);
  const Matrix z = randn(1, 4, rng);
  const auto q = gaussian(randn(1, 4, rng), randn(1, 4, rng, 0.3));
  EXPECT_NEAR(club_upper_bound(z, q).value, 0.0, 1e-12);
}

TEST(Club, TwoSamplesWithExactMeans) {
  std::mt19937_64 rng(17);
  const Matrix z = randn(2, 3, rng);
  const auto q = gaussian(z, Matrix::Zero(2, 3));
  EXPECT_NEAR(club_upper_bound(z, q).value, (z.row(0) - z.row(1)).squaredNorm() / 4.0, 1e-12);
}

TEST(Club, MatchesDoubleSumOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial * 3;
    const Matrix z = randn(n, 4, rng);
    const auto q = gaussian(randn(n, 4, rng), randn(n, 4, rng, 0.5));
    EXPECT_NEAR(club_upper_bound(z, q).value, naive_club(z, q.mean, q.log_std), 1e-9);
  }
}

TEST(Club, InvariantToJointRowPermutation) {
  std::mt19937_64 rng(21);
  const Matrix z = randn(12, 3, rng);
  const auto q = gaussian(randn(12, 3, rng), randn(12, 3, rng, 0.5));
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(12);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 12, rng);
  const auto pq = gaussian(perm * q.mean, perm * q.log_std);
  EXPECT_NEAR(club_upper_bound(perm * z, pq).value, club_upper_bound(z, q).value, 1e-10);
}

TEST(Club, ScalarGaussianMatchesClosedForm) {
  // z = rho x + sqrt(1 - rho^2) e with q the exact conditional: the bound's
  // expectation is rho^2 / (1 - rho^2), above the true MI -log(1 - rho^2) / 2.
  std::mt19937_64 rng(23);
  const double rho = 0.5;
  const int n = 20000;
  const Matrix x = randn(n, 1, rng);
  const Matrix e = randn(n, 1, rng);
  const Matrix z = rho * x + std::sqrt(1 - rho * rho) * e;
  const auto q = gaussian(rho * x, Matrix::Constant(n, 1, 0.5 * std::log(1 - rho * rho)));
  const double value = club_upper_bound(z, q).value;
  EXPECT_NEAR(value, rho * rho / (1 - rho * rho), 0.03);
  EXPECT_GT(value, -0.5 * std::log(1 - rho * rho));
}

TEST(Club, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(25);
  const int n = 6, d = 3;
  Matrix z = randn(n, d, rng);
  Matrix mean = randn(n, d, rng);
  Matrix log_std = randn(n, d, rng, 0.3);
  const double scale = 1.3;
  auto value = [&] { return scale * club_upper_bound(z, gaussian(mean, log_std)).value; };
  Matrix dz = Matrix::Zero(n, d), dm = Matrix::Zero(n, d), ds = Matrix::Zero(n, d);
  club_upper_bound(z, gaussian(mean, log_std), {}, "club", scale, &dz, &dm, &ds);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    EXPECT_NEAR(dz.data()[i], central_difference(z, i, value), 1e-6);
    EXPECT_NEAR(dm.data()[i], central_difference(mean, i, value), 1e-6);
    EXPECT_NEAR(ds.data()[i], central_difference(log_std, i, value), 1e-6);
  }
}

TEST(Club, OptionsRestrictGradientFlow) {
  std::mt19937_64 rng(27);
  const Matrix z = randn(5, 2, rng);
  const auto q = gaussian(randn(5, 2, rng), randn(5, 2, rng, 0.3));
  ClubOptions opts;
  opts.detach_negative_latents = true;
  opts.grad_to_q = false;
  Matrix dz = Matrix::Zero(5, 2), dm = Matrix::Zero(5, 2), ds = Matrix::Zero(5, 2);
  club_upper_bound(z, q, opts, "club", 1.0, &dz, &dm, &ds);
  const Matrix positive_only = (-1.0 / 5) * (-2.0 * q.log_std.array()).exp().matrix().cwiseProduct(z - q.mean);
  EXPECT_LT((dz - positive_only).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(dm.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(ds.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Club, RejectsShapeMismatch) {
  const auto q = gaussian(Matrix::Zero(3, 2), Matrix::Zero(3, 2));
  EXPECT_THROW(club_upper_bound(Matrix::Zero(4, 2), q), std::invalid_argument);
  EXPECT_THROW(club_upper_bound(Matrix::Zero(0, 2), gaussian(Matrix::Zero(0, 2), Matrix::Zero(0, 2))),
               std::invalid_argument);
}

TEST(QLikelihood, MatchesGaussianDensityAndGradients) {
  std::mt19937_64 rng(29);
  Matrix mean = randn(4, 2, rng);
  Matrix log_std = randn(4, 2, rng, 0.3);
  const Matrix z = randn(4, 2, rng);
  double expect = 0;
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 2; ++c) {
      const double s = std::exp(log_std(i, c));
      const double d = (z(i, c) - mean(i, c)) / s;
      expect += -0.5 * d * d - std::log(s) - 0.5 * std::log(2 * M_PI);
    }
  EXPECT_NEAR(club_q_likelihood(z, gaussian(mean, log_std)), expect / 4, 1e-12);

  Matrix dm = Matrix::Zero(4, 2), ds = Matrix::Zero(4, 2);
  club_q_likelihood(z, gaussian(mean, log_std), 1.0, &dm, &ds);
  auto value = [&] { return club_q_likelihood(z, gaussian(mean, log_std)); };
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    EXPECT_NEAR(dm.data()[i], central_difference(mean, i, value), 1e-7);
    EXPECT_NEAR(ds.data()[i], central_difference(log_std, i, value), 1e-7);
  }
}

TEST(ReconBound, UniformProbabilitiesIgnoreWhichViewIsScored) {
  std::mt19937_64 rng(31);
  const Graph a = random_graph(6, 0.2, 2, 0, rng);
  const Graph b = random_graph(6, 0.7, 2, 0, rng);
  FeatureDecoder dec("dec", 3, 2, rng);
  ReconOptions adj_only;
  adj_only.feature_term = false;
  const Matrix z = Matrix::Zero(6, 3);
  EXPECT_NEAR(cross_recon_lower_bound(single(a), z, dec, "x", adj_only).value, 36 * std::log(0.5), 1e-10);
  EXPECT_NEAR(cross_recon_lower_bound(single(b), z, dec, "x", adj_only).value, 36 * std::log(0.5), 1e-10);
}

TEST(ReconBound, LowerEstimatesAreNonPositive) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = random_graph(3 + trial % 6, 0.4, 2, 0, rng);
    FeatureDecoder dec("dec", 4, 2, rng);
    ReconOptions adj_only;
    adj_only.feature_term = false;
    EXPECT_LE(recon_lower_bound(single(g), randn(g.node_count(), 4, rng, 2.0), dec, "r", adj_only).value, 0.0);
  }
}

TEST(Club, NonNegativeWhenMeansMatchLatents) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = randn(2 + trial, 3, rng);
    EXPECT_GE(club_upper_bound(z, gaussian(z, randn(2 + trial, 3, rng, 0.5))).value, 0.0);
  }
}

TEST(Club, CorrelatedGaussiansWithFittedQ) {
  // Per-dimension correlation 0.8 between x and y; q(y | x) is the
  // likelihood-maximizing linear Gaussian, fitted per dimension in closed form.
  std::mt19937_64 rng(37);
  const int n = 10000, d = 4;
  const double rho = 0.8;
  const Matrix x = randn(n, d, rng);
  const Matrix y = rho * x + std::sqrt(1 - rho * rho) * randn(n, d, rng);
  Matrix mean(n, d), log_std(n, d);
  for (int c = 0; c < d; ++c) {
    const double mx = x.col(c).mean(), my = y.col(c).mean();
    const double cov = ((x.col(c).array() - mx) * (y.col(c).array() - my)).mean();
    const double var = (x.col(c).array() - mx).square().mean();
    const double slope = cov / var;
    mean.col(c) = (slope * (x.col(c).array() - mx) + my).matrix();
    const double resid = (y.col(c) - mean.col(c)).squaredNorm() / n;
    log_std.col(c).setConstant(0.5 * std::log(resid));
  }
  const double mi = -0.5 * d * std::log(1 - rho * rho);
  EXPECT_GE(club_upper_bound(y, gaussian(mean, log_std)).value, mi - 0.05);
}

TEST(QLikelihood, NormalizationExamples) {
  const Matrix z = Matrix::Constant(3, 64, 0.25);
  EXPECT_NEAR(club_q_likelihood(z, gaussian(z, Matrix::Zero(3, 64))), -32 * std::log(2 * M_PI), 1e-10);
  EXPECT_LT(club_q_likelihood(z, gaussian(z, Matrix::Constant(3, 64, std::log(2.0)))),
            club_q_likelihood(z, gaussian(z, Matrix::Zero(3, 64))));
}
