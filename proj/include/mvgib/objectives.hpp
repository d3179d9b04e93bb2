#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvgib/bounds.hpp"
#include "mvgib/error.hpp"
#include "mvgib/models.hpp"

namespace mvgib {

/// Trade-off weights: delta / eta scale the two CLUB terms of the
/// complementarity objective, zeta / xi the two cross-view terms of the
/// consistency objective.
struct LossWeights {
  double delta = 1.0;
  double eta = 1.0;
  double zeta = 1.0;
  double xi = 1.0;

  /// beta sets delta = eta, gamma sets zeta = xi.
  static LossWeights from_beta_gamma(double beta, double gamma) { return {beta, beta, gamma, gamma}; }

  void validate() const {
    if (!(delta >= 0) || !(eta >= 0) || !(zeta >= 0) || !(xi >= 0)) throw std::invalid_argument("loss weights must be >= 0");
  }
};

struct ObjectiveOptions {
  bool feature_recon = true;
  double prob_clamp = 1e-7;
  ClubOptions club;

  ReconOptions recon() const { return ReconOptions{feature_recon, prob_clamp}; }
};

/// Every term of L_h and L_c plus the total loss.
struct LossBreakdown {
  double recon_h1 = 0, recon_h2 = 0, club_h1 = 0, club_h2 = 0;
  double recon_c1 = 0, recon_c2 = 0, cross_c1 = 0, cross_c2 = 0;
  double L_h = 0, L_c = 0, total = 0;
};

/// Thrown when a loss term is NaN or infinite.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& term, LossBreakdown loss)
      : Error("non-finite loss term '" + term + "'"), term_(term), loss_(loss) {}
  const std::string& term() const { return term_; }
  const LossBreakdown& loss() const { return loss_; }

 private:
  std::string term_;
  LossBreakdown loss_;
};

/// L_h = recon_h1 + recon_h2 - delta * club_h1 - eta * club_h2.
///
/// With `grads`, the gradient of the total loss -(L_h + L_c) restricted to
/// these terms is accumulated (decoder parameters directly, encoders through
/// `grads`).
inline LossBreakdown complementarity_loss(MvgibModel& model, const ForwardPass& f, const GraphBatch& view1,
                                          const GraphBatch& view2, const LossWeights& w,
                                          const ObjectiveOptions& opts = {}, LatentGrads* grads = nullptr) {
  const auto& l = f.latents;
  const ReconOptions ro = opts.recon();
  const double s = grads ? -1.0 : 0.0;
  LossBreakdown out;
  out.recon_h1 = recon_lower_bound(view1, l.node_h1, model.decoder_h1(), "recon_h1", ro, s,
                                   grads ? &grads->node_h1 : nullptr).value;
  out.recon_h2 = recon_lower_bound(view2, l.node_h2, model.decoder_h2(), "recon_h2", ro, s,
                                   grads ? &grads->node_h2 : nullptr).value;
  out.club_h1 = club_upper_bound(l.h1, f.q_h1, opts.club, "club_h1", grads ? w.delta : 0.0,
                                 grads ? &grads->h1 : nullptr, grads ? &grads->q_h1_mean : nullptr,
                                 grads ? &grads->q_h1_log_std : nullptr).value;
  out.club_h2 = club_upper_bound(l.h2, f.q_h2, opts.club, "club_h2", grads ? w.eta : 0.0,
                                 grads ? &grads->h2 : nullptr, grads ? &grads->q_h2_mean : nullptr,
                                 grads ? &grads->q_h2_log_std : nullptr).value;
  out.L_h = out.recon_h1 + out.recon_h2 - w.delta * out.club_h1 - w.eta * out.club_h2;
  out.total = -out.L_h;
  return out;
}

/// L_c = recon_c1 + recon_c2 + zeta * cross_c1 + xi * cross_c2.
inline LossBreakdown consistency_loss(MvgibModel& model, const ForwardPass& f, const GraphBatch& view1,
                                      const GraphBatch& view2, const LossWeights& w,
                                      const ObjectiveOptions& opts = {}, LatentGrads* grads = nullptr) {
  const auto& l = f.latents;
  const ReconOptions ro = opts.recon();
  const bool g = grads != nullptr;
  LossBreakdown out;
  out.recon_c1 = recon_lower_bound(view1, l.node_c1, model.decoder_c1(), "recon_c1", ro, g ? -1.0 : 0.0,
                                   g ? &grads->node_c1 : nullptr).value;
  out.recon_c2 = recon_lower_bound(view2, l.node_c2, model.decoder_c2(), "recon_c2", ro, g ? -1.0 : 0.0,
                                   g ? &grads->node_c2 : nullptr).value;
  out.cross_c1 = cross_recon_lower_bound(view2, l.node_c1, model.cross_decoder_c1(), "cross_c1", ro,
                                         g ? -w.zeta : 0.0, g ? &grads->node_c1 : nullptr).value;
  out.cross_c2 = cross_recon_lower_bound(view1, l.node_c2, model.cross_decoder_c2(), "cross_c2", ro,
                                         g ? -w.xi : 0.0, g ? &grads->node_c2 : nullptr).value;
  out.L_c = out.recon_c1 + out.recon_c2 + w.zeta * out.cross_c1 + w.xi * out.cross_c2;
  out.total = -out.L_c;
  return out;
}

namespace detail {
inline void require_finite(const LossBreakdown& b) {
  const std::pair<const char*, double> terms[] = {
      {"recon_h1", b.recon_h1}, {"recon_h2", b.recon_h2}, {"club_h1", b.club_h1}, {"club_h2", b.club_h2},
      {"recon_c1", b.recon_c1}, {"recon_c2", b.recon_c2}, {"cross_c1", b.cross_c1}, {"cross_c2", b.cross_c2},
      {"total", b.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NonFiniteLoss(name, b);
  }
}
}  // namespace detail

/// Full breakdown with total = -(L_h + L_c). Throws NonFiniteLoss naming the
/// first offending term.
inline LossBreakdown total_loss(MvgibModel& model, const ForwardPass& f, const GraphBatch& view1,
                                const GraphBatch& view2, const LossWeights& w, const ObjectiveOptions& opts = {},
                                LatentGrads* grads = nullptr) {
  const LossBreakdown h = complementarity_loss(model, f, view1, view2, w, opts, grads);
  const LossBreakdown c = consistency_loss(model, f, view1, view2, w, opts, grads);
  LossBreakdown out = h;
  out.recon_c1 = c.recon_c1;
  out.recon_c2 = c.recon_c2;
  out.cross_c1 = c.cross_c1;
  out.cross_c2 = c.cross_c2;
  out.L_c = c.L_c;
  out.total = -(out.L_h + out.L_c);
  detail::require_finite(out);
  return out;
}

/// What the optimizer minimizes: the total loss plus the negated
/// log-likelihoods that fit q(h1|G2) and q(h2|G1).
struct TrainingObjective {
  LossBreakdown loss;
  double q_lik_h1 = 0.0;
  double q_lik_h2 = 0.0;
  double value = 0.0;
};

inline TrainingObjective training_objective(MvgibModel& model, const ForwardPass& f, const GraphBatch& view1,
                                            const GraphBatch& view2, const LossWeights& w,
                                            const ObjectiveOptions& opts = {}, LatentGrads* grads = nullptr,
                                            bool q_likelihood_grads = true) {
  TrainingObjective out;
  out.loss = total_loss(model, f, view1, view2, w, opts, grads);
  LatentGrads* qg = q_likelihood_grads ? grads : nullptr;
  const double s = qg ? -1.0 : 0.0;
  out.q_lik_h1 = club_q_likelihood(f.latents.h1, f.q_h1, s, qg ? &qg->q_h1_mean : nullptr,
                                   qg ? &qg->q_h1_log_std : nullptr);
  out.q_lik_h2 = club_q_likelihood(f.latents.h2, f.q_h2, s, qg ? &qg->q_h2_mean : nullptr,
                                   qg ? &qg->q_h2_log_std : nullptr);
  out.value = out.loss.total - out.q_lik_h1 - out.q_lik_h2;
  if (!std::isfinite(out.q_lik_h1)) throw NonFiniteLoss("q_lik_h1", out.loss);
  if (!std::isfinite(out.q_lik_h2)) throw NonFiniteLoss("q_lik_h2", out.loss);
  return out;
}

/// Checks the definitional identities of a breakdown.
inline bool breakdown_consistent(const LossBreakdown& b, const LossWeights& w, double tol = 1e-9) {
  const double lh = b.recon_h1 + b.recon_h2 - w.delta * b.club_h1 - w.eta * b.club_h2;
  const double lc = b.recon_c1 + b.recon_c2 + w.zeta * b.cross_c1 + w.xi * b.cross_c2;
  auto close = [tol](double a, double c) { return std::abs(a - c) <= tol * std::max(1.0, std::abs(c)); };
  return close(b.L_h, lh) && close(b.L_c, lc) && close(b.total, -(b.L_h + b.L_c));
}

/// The eight bound estimates contained in a breakdown, for logging.
inline std::vector<BoundEstimate> bound_estimates(const LossBreakdown& b) {
  auto lower = [](const char* id, double v) { return BoundEstimate{v, BoundKind::Lower, id}; };
  auto upper = [](const char* id, double v) { return BoundEstimate{v, BoundKind::Upper, id}; };
  return {lower("recon_h1", b.recon_h1), lower("recon_h2", b.recon_h2), upper("club_h1", b.club_h1),
          upper("club_h2", b.club_h2),   lower("recon_c1", b.recon_c1), lower("recon_c2", b.recon_c2),
          lower("cross_c1", b.cross_c1), lower("cross_c2", b.cross_c2)};
}

}  // namespace mvgib
