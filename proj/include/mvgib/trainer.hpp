#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mvgib/checkpoint.hpp"
#include "mvgib/objectives.hpp"
#include "mvgib/seed.hpp"

namespace mvgib {

struct TrainConfig {
  int epochs = 100;
  double lr = 0.01;
  double lr_decay = 0.5;
  int decay_every = 50;
  int batch_size = 128;
  EncoderConfig encoder;
  std::uint64_t seed = 0;
  LossWeights weights;
  ObjectiveOptions objective;
  /// Fit q by its likelihood in a separate optimizer step before each main
  /// step, with the main step's CLUB gradients kept away from q.
  bool club_alternating = false;
  /// Adds a "wall_time" field to each metrics record. Off by default so that
  /// metrics files are byte-identical across runs.
  bool log_wall_time = false;

  void validate() const {
    if (epochs <= 0) throw std::invalid_argument("epochs must be > 0");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be > 0");
    if (decay_every <= 0) throw std::invalid_argument("decay_every must be > 0");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be > 0");
    encoder.validate();
    weights.validate();
  }
};

inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.decay_every));
}

/// Shuffled mini-batches of at most `batch_size` indices. A trailing
/// single-graph batch is merged into the previous one.
inline std::vector<std::vector<int>> epoch_batches(int n, int batch_size, std::mt19937_64& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  TrainingObjective objective;
};

inline nlohmann::json to_json(const LossBreakdown& b) {
  return {{"recon_h1", b.recon_h1}, {"recon_h2", b.recon_h2}, {"club_h1", b.club_h1}, {"club_h2", b.club_h2},
          {"recon_c1", b.recon_c1}, {"recon_c2", b.recon_c2}, {"cross_c1", b.cross_c1}, {"cross_c2", b.cross_c2},
          {"L_h", b.L_h},           {"L_c", b.L_c},           {"total", b.total}};
}

/// One "loss" record per step followed by one "bound" record per estimate.
inline void write_step_metrics(std::ostream& out, const StepRecord& r, const double* wall_time = nullptr) {
  nlohmann::json loss = {{"type", "loss"}, {"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}};
  loss.update(to_json(r.objective.loss));
  loss["q_lik_h1"] = r.objective.q_lik_h1;
  loss["q_lik_h2"] = r.objective.q_lik_h2;
  loss["objective"] = r.objective.value;
  if (wall_time) loss["wall_time"] = *wall_time;
  out << loss.dump() << '\n';
  for (const auto& b : bound_estimates(r.objective.loss)) {
    const nlohmann::json rec = {
        {"type", "bound"}, {"step", r.step}, {"term_id", b.term_id}, {"kind", to_string(b.kind)}, {"value", b.value}};
    out << rec.dump() << '\n';
  }
}

/// Thrown when a step produces a non-finite loss.
class TrainingAborted : public Error {
 public:
  TrainingAborted(int epoch, int step, const NonFiniteLoss& cause)
      : Error("training aborted at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " +
              cause.what() + "; breakdown " + to_json(cause.loss()).dump()),
        epoch_(epoch), step_(step), loss_(cause.loss()) {}
  int epoch() const { return epoch_; }
  int step() const { return step_; }
  const LossBreakdown& loss() const { return loss_; }

 private:
  int epoch_, step_;
  LossBreakdown loss_;
};

struct TrainOutputs {
  std::ostream* metrics = nullptr;
  /// When set, checkpoints are written every `decay_every` epochs
  /// (checkpoint_epoch<E>.cbor) and at the end (checkpoint.cbor).
  std::filesystem::path checkpoint_dir;
  std::map<std::string, std::string> checkpoint_metadata;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  MvgibModel model;
  std::vector<StepRecord> steps;
  std::vector<double> epoch_loss;  // mean total loss per epoch
};

/// Trains a fresh model on prebuilt views. Batches are drawn from a
/// dedicated "order" sub-seed and parameters from an "init" sub-seed.
inline TrainResult train(std::span<const MultiviewGraph> data, const TrainConfig& cfg, const TrainOutputs& out = {}) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  cfg.validate();
  ModelConfig mc;
  mc.feature_dim = data.front().view1.feature_dim();
  mc.encoder = cfg.encoder;
  mc.seed = sub_seed(cfg.seed, "init");
  TrainResult result{MvgibModel(mc), {}, {}};
  MvgibModel& model = result.model;
  Adam adam(cfg.club_alternating ? model.main_parameters() : model.parameters());
  Adam q_adam(model.q_parameters());
  ObjectiveOptions main_opts = cfg.objective;
  if (cfg.club_alternating) main_opts.club.grad_to_q = false;
  std::mt19937_64 order_rng(sub_seed(cfg.seed, "order"));
  const auto start = std::chrono::steady_clock::now();
  const int n = static_cast<int>(data.size());

  auto save = [&](const std::string& file) {
    if (!out.checkpoint_dir.empty()) save_checkpoint(out.checkpoint_dir / file, model, out.checkpoint_metadata);
  };

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    double epoch_total = 0.0;
    const auto batches = epoch_batches(n, cfg.batch_size, order_rng);
    for (const auto& idx : batches) {
      const auto [v1, v2] = batch_graphs(data, idx);
      if (cfg.club_alternating) {
        model.zero_grad();
        const ForwardPass fq = model.forward(v1, v2, Mode::Train);
        LatentGrads qg = LatentGrads::zeros_like(fq);
        club_q_likelihood(fq.latents.h1, fq.q_h1, -1.0, &qg.q_h1_mean, &qg.q_h1_log_std);
        club_q_likelihood(fq.latents.h2, fq.q_h2, -1.0, &qg.q_h2_mean, &qg.q_h2_log_std);
        model.backward(fq, v1, v2, qg);
        q_adam.step(lr);
      }
      model.zero_grad();
      const ForwardPass f = model.forward(v1, v2, Mode::Train);
      LatentGrads grads = LatentGrads::zeros_like(f);
      StepRecord rec{epoch, step, lr, {}};
      try {
        rec.objective = training_objective(model, f, v1, v2, cfg.weights, main_opts, &grads,
                                           /*q_likelihood_grads=*/!cfg.club_alternating);
      } catch (const NonFiniteLoss& e) {
        throw TrainingAborted(epoch, step, e);
      }
      model.backward(f, v1, v2, grads);
      adam.step(lr);
      epoch_total += rec.objective.loss.total;
      if (out.metrics) {
        if (cfg.log_wall_time) {
          const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          write_step_metrics(*out.metrics, rec, &t);
        } else {
          write_step_metrics(*out.metrics, rec);
        }
      }
      if (out.on_step) out.on_step(rec);
      result.steps.push_back(std::move(rec));
      ++step;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(batches.size()));
    if ((epoch + 1) % cfg.decay_every == 0 && epoch + 1 < cfg.epochs) {
      save("checkpoint_epoch" + std::to_string(epoch + 1) + ".cbor");
    }
  }
  if (out.metrics) out.metrics->flush();
  save("checkpoint.cbor");
  return result;
}

}  // namespace mvgib
