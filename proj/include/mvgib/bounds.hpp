#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mvgib/graph.hpp"
#include "mvgib/models.hpp"

namespace mvgib {

enum class BoundKind { Lower, Upper };

inline std::string to_string(BoundKind k) { return k == BoundKind::Lower ? "lower" : "upper"; }

/// Per-batch estimate of one mutual-information term, in nats per graph.
/// Reconstruction estimates also report their adjacency and feature parts.
struct BoundEstimate {
  double value = 0.0;
  BoundKind kind = BoundKind::Lower;
  std::string term_id;
  double adjacency_part = 0.0;
  double feature_part = 0.0;
};

struct ReconOptions {
  bool feature_term = true;
  double prob_clamp = 1e-7;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Bernoulli log-likelihood of a dense 0/1 target under logistic(z z^T),
/// summed over all n^2 entries (diagonal included, scored against 0).
/// Probabilities are clamped to [clamp, 1 - clamp]; clamped entries pass no
/// gradient. If `d_z` is given, `scale * dLL/dz` is added to it.
inline double adjacency_log_likelihood(const Matrix& target, const Matrix& z, double clamp,
                                       double scale = 0.0, Matrix* d_z = nullptr) {
  const Eigen::Index n = z.rows();
  if (target.rows() != n || target.cols() != n) throw std::invalid_argument("adjacency target shape mismatch");
  const Matrix logits = z * z.transpose();
  Matrix g;
  const bool want_grad = d_z != nullptr && scale != 0.0;
  if (want_grad) g.resize(n, n);
  double ll = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = logistic(logits(i, j));
      const double p = std::min(std::max(s, clamp), 1.0 - clamp);
      const double a = target(i, j);
      ll += a * std::log(p) + (1.0 - a) * std::log1p(-p);
      if (want_grad) g(i, j) = (s > clamp && s < 1.0 - clamp) ? (a - s) : 0.0;
    }
  }
  if (want_grad) d_z->noalias() += (scale * 2.0) * (g * z);
  return ll;
}

/// Unit-variance Gaussian log-likelihood of `target` rows under `mean` rows,
/// including the normalization constant.
inline double feature_log_likelihood(const Matrix& target, const Matrix& mean) {
  return -0.5 * (target - mean).squaredNorm() - 0.5 * kLog2Pi * static_cast<double>(target.size());
}

namespace detail {

inline BoundEstimate reconstruction(const GraphBatch& target, const Matrix& node_latents, FeatureDecoder& decoder,
                                    std::string term_id, const ReconOptions& opts, double grad_scale,
                                    Matrix* d_latents) {
  const int graphs = target.graph_count();
  if (node_latents.rows() != target.node_count()) {
    throw std::invalid_argument(term_id + ": latent rows do not match target node count");
  }
  const bool want_grad = d_latents != nullptr && grad_scale != 0.0;
  const double per_graph = grad_scale / static_cast<double>(graphs);

  double adj = 0.0;
  for (int g = 0; g < graphs; ++g) {
    const int off = target.offsets[g];
    const int n = target.graph_size(g);
    const Matrix z = node_latents.middleRows(off, n);
    if (want_grad) {
      Matrix dz = Matrix::Zero(n, z.cols());
      adj += adjacency_log_likelihood(target.dense_block(g), z, opts.prob_clamp, per_graph, &dz);
      d_latents->middleRows(off, n) += dz;
    } else {
      adj += adjacency_log_likelihood(target.dense_block(g), z, opts.prob_clamp);
    }
  }

  double feat = 0.0;
  if (opts.feature_term) {
    FeatureDecoder::Trace trace;
    const Matrix recon = decoder.forward(node_latents, want_grad ? &trace : nullptr);
    feat = feature_log_likelihood(target.features, recon);
    if (want_grad) {
      const Matrix d_recon = per_graph * (target.features - recon);
      *d_latents += decoder.backward(trace, d_recon);
    }
  }

  BoundEstimate est;
  est.kind = BoundKind::Lower;
  est.term_id = std::move(term_id);
  est.adjacency_part = adj / graphs;
  est.feature_part = feat / graphs;
  est.value = est.adjacency_part + est.feature_part;
  return est;
}

}  // namespace detail

/// Variational lower bound E log q(G | z) (up to the entropy of G) for a
/// latent encoded from `target` itself.
///
/// When `d_latents` is given, `grad_scale * d value / d latents` is added to
/// it and the same scaled gradient reaches the decoder's parameters.
inline BoundEstimate recon_lower_bound(const GraphBatch& target, const Matrix& node_latents,
                                       FeatureDecoder& decoder, std::string term_id = "recon",
                                       const ReconOptions& opts = {}, double grad_scale = 0.0,
                                       Matrix* d_latents = nullptr) {
  return detail::reconstruction(target, node_latents, decoder, std::move(term_id), opts, grad_scale, d_latents);
}

/// Cross-view lower bound: latents encoded from one view, scored against the
/// other view's adjacency and features.
inline BoundEstimate cross_recon_lower_bound(const GraphBatch& other_view, const Matrix& node_latents_from_own_view,
                                             FeatureDecoder& cross_decoder, std::string term_id = "cross",
                                             const ReconOptions& opts = {}, double grad_scale = 0.0,
                                             Matrix* d_latents = nullptr) {
  if (node_latents_from_own_view.rows() != other_view.node_count()) {
    throw std::invalid_argument(term_id + ": views disagree on node count");
  }
  return detail::reconstruction(other_view, node_latents_from_own_view, cross_decoder, std::move(term_id), opts,
                                grad_scale, d_latents);
}

struct ClubOptions {
  /// Treat latents as constants inside the negative-pair double sum.
  bool detach_negative_latents = false;
  /// Let the bound's gradient reach the variational q. When false, q is
  /// shaped by its likelihood term only.
  bool grad_to_q = true;
};

/// Closed-form Gaussian contrastive log-ratio upper bound
///
///   -1/2 * 1/N   sum_i     (z_i - mu_i)^T Diag[sigma_i^-2] (z_i - mu_i)
///   +1/2 * 1/N^2 sum_i sum_j (z_j - mu_i)^T Diag[sigma_i^-2] (z_j - mu_i)
///
/// where row i of `latents` is paired with row i of `q`. The double sum is
/// evaluated in O(N d) through per-dimension moments of the latents.
inline BoundEstimate club_upper_bound(const Matrix& latents, const GaussianParams& q, const ClubOptions& opts = {},
                                      std::string term_id = "club", double grad_scale = 0.0,
                                      Matrix* d_latents = nullptr, Matrix* d_mean = nullptr,
                                      Matrix* d_log_std = nullptr) {
  const Eigen::Index n_rows = latents.rows();
  if (n_rows < 1) throw std::invalid_argument("club: need at least one sample");
  if (q.mean.rows() != n_rows || q.mean.cols() != latents.cols()) throw std::invalid_argument("club: shape mismatch");
  const double n = static_cast<double>(n_rows);

  const Matrix precision = (-2.0 * q.log_std.array()).exp().matrix();  // sigma^-2
  const Matrix diff = latents - q.mean;
  const double positive = -0.5 / n * (precision.array() * diff.array().square()).sum();

  const Eigen::RowVectorXd sum_z = latents.colwise().sum();
  const Eigen::RowVectorXd sum_z2 = latents.array().square().matrix().colwise().sum();
  // spread(i, k) = sum_j (z_jk - mu_ik)^2
  Matrix spread = (-2.0 * q.mean.array()).rowwise() * sum_z.array();
  spread.array() += n * q.mean.array().square();
  spread.rowwise() += sum_z2;
  const double negative = 0.5 / (n * n) * (precision.array() * spread.array()).sum();

  if (grad_scale != 0.0) {
    if (d_latents) {
      *d_latents += grad_scale * (-1.0 / n) * precision.cwiseProduct(diff);
      if (!opts.detach_negative_latents) {
        const Eigen::RowVectorXd w_sum = precision.colwise().sum();
        const Eigen::RowVectorXd wm_sum = precision.cwiseProduct(q.mean).colwise().sum();
        Matrix d_neg = latents.array().rowwise() * w_sum.array();
        d_neg.rowwise() -= wm_sum;
        *d_latents += grad_scale / (n * n) * d_neg;
      }
    }
    if (opts.grad_to_q) {
      if (d_mean) {
        Matrix g = (1.0 / n) * precision.cwiseProduct(diff);
        Matrix centred = (n * q.mean).rowwise() - sum_z;
        g += (1.0 / (n * n)) * precision.cwiseProduct(centred);
        *d_mean += grad_scale * g;
      }
      if (d_log_std) {
        Matrix g = (1.0 / n) * precision.cwiseProduct(diff.cwiseAbs2());
        g -= (1.0 / (n * n)) * precision.cwiseProduct(spread);
        *d_log_std += grad_scale * g;
      }
    }
  }

  BoundEstimate est;
  est.kind = BoundKind::Upper;
  est.term_id = std::move(term_id);
  est.value = positive + negative;
  return est;
}

/// Mean diagonal-Gaussian log-density of latent_i under (mu_i, sigma_i),
/// normalization included. Latents are treated as constants: gradients, when
/// requested, go to the Gaussian parameters only.
inline double club_q_likelihood(const Matrix& latents, const GaussianParams& q, double grad_scale = 0.0,
                                Matrix* d_mean = nullptr, Matrix* d_log_std = nullptr) {
  const Eigen::Index n_rows = latents.rows();
  if (q.mean.rows() != n_rows || q.mean.cols() != latents.cols()) throw std::invalid_argument("q-likelihood: shape mismatch");
  const double n = static_cast<double>(n_rows);
  const Matrix precision = (-2.0 * q.log_std.array()).exp().matrix();
  const Matrix diff = latents - q.mean;
  const double total = -0.5 * kLog2Pi * static_cast<double>(latents.size()) - q.log_std.sum() -
                       0.5 * (precision.array() * diff.array().square()).sum();
  if (grad_scale != 0.0) {
    if (d_mean) *d_mean += (grad_scale / n) * precision.cwiseProduct(diff);
    if (d_log_std) {
      Matrix g = precision.cwiseProduct(diff.cwiseAbs2());
      g.array() -= 1.0;
      *d_log_std += (grad_scale / n) * g;
    }
  }
  return total / n;
}

}  // namespace mvgib
