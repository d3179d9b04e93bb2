#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvgib/graph.hpp"
#include "mvgib/nn.hpp"

namespace mvgib {

struct EncoderConfig {
  int layers = 5;
  int hidden_dim = 64;
  bool batch_norm = true;

  void validate() const {
    if (layers < 1) throw std::invalid_argument("encoder: layers must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("encoder: hidden_dim must be >= 1");
  }
};

/// GIN update h'_v = MLP((1 + eps) h_v + sum_{u in N(v)} h_u), where the MLP
/// is Linear -> ELU -> Linear followed by batch normalization.
class GinLayer {
 public:
  struct Trace {
    Matrix input;
    Matrix aggregated;
    Matrix hidden;  // ELU output inside the MLP
    BatchNorm::Trace bn;
    Mode mode = Mode::Train;
  };

  GinLayer() = default;
  GinLayer(const std::string& name, int in, int hidden, bool batch_norm, std::mt19937_64& rng)
      : eps_(name + ".eps", Matrix::Zero(1, 1)),
        lin1_(name + ".mlp.0", in, hidden, rng),
        lin2_(name + ".mlp.1", hidden, hidden, rng),
        bn_(name + ".bn", hidden),
        batch_norm_(batch_norm) {}

  Matrix forward(const Matrix& h, const SparseMatrix& adjacency, Mode mode, Trace* t) {
    Matrix agg = (1.0 + eps_.value(0, 0)) * h;
    agg.noalias() += adjacency * h;
    Matrix hidden = elu(lin1_.forward(agg));
    Matrix out = lin2_.forward(hidden);
    if (batch_norm_) out = bn_.forward(out, mode, t ? &t->bn : nullptr);
    if (t) {
      t->input = h;
      t->aggregated = std::move(agg);
      t->hidden = std::move(hidden);
      t->mode = mode;
    }
    return out;
  }

  Matrix backward(const Trace& t, const SparseMatrix& adjacency, const Matrix& d_out) {
    Matrix dz = d_out;
    if (batch_norm_) dz = t.mode == Mode::Train ? bn_.backward(t.bn, d_out) : bn_.backward_eval(t.bn, d_out);
    Matrix d_hidden = lin2_.backward(t.hidden, dz);
    Matrix d_pre = elu_backward(t.hidden, d_hidden);
    Matrix d_agg = lin1_.backward(t.aggregated, d_pre);
    eps_.grad(0, 0) += (t.input.array() * d_agg.array()).sum();
    Matrix d_in = (1.0 + eps_.value(0, 0)) * d_agg;
    d_in.noalias() += adjacency.transpose() * d_agg;
    return d_in;
  }

  Param& eps() { return eps_; }
  Linear& lin1() { return lin1_; }
  Linear& lin2() { return lin2_; }
  BatchNorm& norm() { return bn_; }

  void append_params(ParamList& out) {
    out.push_back(&eps_);
    lin1_.append_params(out);
    lin2_.append_params(out);
    if (batch_norm_) bn_.append_params(out);
  }

 private:
  Param eps_;
  Linear lin1_;
  Linear lin2_;
  BatchNorm bn_;
  bool batch_norm_ = true;
};

/// Single GIN layer applied to one graph.
inline Matrix gin_layer_forward(const Matrix& node_feats, const SparseMatrix& adjacency, GinLayer& layer,
                                Mode mode = Mode::Eval) {
  return layer.forward(node_feats, adjacency, mode, nullptr);
}

/// Stack of GIN layers with ELU between layers. The last layer's output is
/// left unactivated so node latents can take either sign.
class GinEncoder {
 public:
  struct Trace {
    std::vector<GinLayer::Trace> layers;
    std::vector<Matrix> activated;  // ELU outputs between layers
  };

  GinEncoder() = default;
  GinEncoder(const std::string& name, int in_dim, const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    int d = in_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      layers_.emplace_back(name + ".layers." + std::to_string(l), d, cfg.hidden_dim, cfg.batch_norm, rng);
      d = cfg.hidden_dim;
    }
  }

  Matrix forward(const Matrix& x, const SparseMatrix& adjacency, Mode mode, Trace* t) {
    if (t) {
      t->layers.assign(layers_.size(), {});
      t->activated.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = layers_[l].forward(h, adjacency, mode, t ? &t->layers[l] : nullptr);
      if (l + 1 < layers_.size()) {
        h = elu(h);
        if (t) t->activated.push_back(h);
      }
    }
    return h;
  }

  void backward(const Trace& t, const SparseMatrix& adjacency, const Matrix& d_out) {
    Matrix d = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (l + 1 < layers_.size()) d = elu_backward(t.activated[l], d);
      d = layers_[l].backward(t.layers[l], adjacency, d);
    }
  }

  std::vector<GinLayer>& layers() { return layers_; }

  void append_params(ParamList& out) {
    for (auto& l : layers_) l.append_params(out);
  }

 private:
  std::vector<GinLayer> layers_;
};

/// Sum of node rows per graph.
inline Matrix sum_readout(const Matrix& node, const std::vector<int>& offsets) {
  const int g = static_cast<int>(offsets.size()) - 1;
  Matrix out(g, node.cols());
  for (int i = 0; i < g; ++i) out.row(i) = node.middleRows(offsets[i], offsets[i + 1] - offsets[i]).colwise().sum();
  return out;
}

inline Matrix sum_readout_backward(const Matrix& d_graph, const std::vector<int>& offsets) {
  Matrix d_node(offsets.back(), d_graph.cols());
  for (int i = 0; i + 1 < static_cast<int>(offsets.size()); ++i) {
    d_node.middleRows(offsets[i], offsets[i + 1] - offsets[i]).rowwise() = d_graph.row(i);
  }
  return d_node;
}

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Inner-product adjacency decoder: P_ij = logistic(z_i . z_j).
inline Matrix decode_adjacency(const Matrix& node_latents) {
  Matrix logits = node_latents * node_latents.transpose();
  return logits.unaryExpr([](double v) { return logistic(v); });
}

/// Two-layer MLP mapping node latents back to node features.
class FeatureDecoder {
 public:
  struct Trace {
    Matrix input;
    Matrix hidden;
  };

  FeatureDecoder() = default;
  FeatureDecoder(const std::string& name, int hidden, int out_dim, std::mt19937_64& rng)
      : lin1_(name + ".0", hidden, hidden, rng), lin2_(name + ".1", hidden, out_dim, rng) {}

  Matrix forward(const Matrix& z, Trace* t) const {
    Matrix hidden = elu(lin1_.forward(z));
    Matrix out = lin2_.forward(hidden);
    if (t) {
      t->input = z;
      t->hidden = std::move(hidden);
    }
    return out;
  }

  Matrix backward(const Trace& t, const Matrix& d_out) {
    Matrix d_hidden = lin2_.backward(t.hidden, d_out);
    return lin1_.backward(t.input, elu_backward(t.hidden, d_hidden));
  }

  Linear& lin1() { return lin1_; }
  Linear& lin2() { return lin2_; }

  void append_params(ParamList& out) {
    lin1_.append_params(out);
    lin2_.append_params(out);
  }

 private:
  Linear lin1_;
  Linear lin2_;
};

inline Matrix decode_features(const Matrix& node_latents, const FeatureDecoder& decoder) {
  return decoder.forward(node_latents, nullptr);
}

/// Diagonal Gaussian per row. `log_std` is already clamped; `active` is 1
/// where the clamp did not bind (gradient passes) and 0 elsewhere.
struct GaussianParams {
  Matrix mean;
  Matrix log_std;
  Matrix std;
  Matrix active;

  int rows() const { return static_cast<int>(mean.rows()); }
};

/// Affine mean and log-std heads; log-std is clamped to [-5, 5].
class GaussianHead {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 5.0;

  GaussianHead() = default;
  GaussianHead(const std::string& name, int in, int out, std::mt19937_64& rng)
      : mean_(name + ".mean", in, out, rng), log_std_(name + ".log_std", in, out, rng) {}

  GaussianParams forward(const Matrix& r) const {
    GaussianParams q;
    q.mean = mean_.forward(r);
    Matrix raw = log_std_.forward(r);
    q.active = raw.unaryExpr([](double v) { return (v >= kLogStdMin && v <= kLogStdMax) ? 1.0 : 0.0; });
    q.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    q.std = q.log_std.array().exp().matrix();
    return q;
  }

  /// d_log_std is the gradient w.r.t. the clamped log-std.
  Matrix backward(const Matrix& r, const GaussianParams& q, const Matrix& d_mean, const Matrix& d_log_std) {
    Matrix d_raw = d_log_std.cwiseProduct(q.active);
    Matrix d_r = mean_.backward(r, d_mean);
    d_r += log_std_.backward(r, d_raw);
    return d_r;
  }

  Linear& mean_layer() { return mean_; }
  Linear& log_std_layer() { return log_std_; }

  void append_params(ParamList& out) {
    mean_.append_params(out);
    log_std_.append_params(out);
  }

 private:
  Linear mean_;
  Linear log_std_;
};

/// GIN encoder + sum readout + Gaussian heads: the variational conditional
/// of one view's latent given the opposite view.
class CrossEncoder {
 public:
  struct Trace {
    GinEncoder::Trace encoder;
    Matrix readout;
  };

  CrossEncoder() = default;
  CrossEncoder(const std::string& name, int in_dim, const EncoderConfig& cfg, std::mt19937_64& rng)
      : encoder_(name + ".encoder", in_dim, cfg, rng), head_(name + ".head", cfg.hidden_dim, cfg.hidden_dim, rng) {}

  GaussianParams forward(const GraphBatch& batch, Mode mode, Trace* t) {
    Matrix node = encoder_.forward(batch.features, batch.adjacency, mode, t ? &t->encoder : nullptr);
    Matrix r = sum_readout(node, batch.offsets);
    GaussianParams q = head_.forward(r);
    if (t) t->readout = std::move(r);
    return q;
  }

  void backward(const Trace& t, const GraphBatch& batch, const GaussianParams& q, const Matrix& d_mean,
                const Matrix& d_log_std) {
    Matrix d_r = head_.backward(t.readout, q, d_mean, d_log_std);
    encoder_.backward(t.encoder, batch.adjacency, sum_readout_backward(d_r, batch.offsets));
  }

  GinEncoder& encoder() { return encoder_; }
  GaussianHead& head() { return head_; }

  void append_params(ParamList& out) {
    encoder_.append_params(out);
    head_.append_params(out);
  }

 private:
  GinEncoder encoder_;
  GaussianHead head_;
};

enum class EncoderId { H1, H2, C1, C2 };
enum class CrossDirection { G2ToH1, G1ToH2 };

/// Graph-level representations {h1, h2, c1, c2} and the node-level latents
/// they are summed from.
struct LatentBundle {
  Matrix h1, h2, c1, c2;
  Matrix node_h1, node_h2, node_c1, node_c2;
};

struct ModelConfig {
  int feature_dim = 0;
  EncoderConfig encoder;
  std::uint64_t seed = 0;
};

/// Everything produced by one forward pass over a pair of view batches.
struct ForwardPass {
  LatentBundle latents;
  GaussianParams q_h1;  // q(h1 | G2)
  GaussianParams q_h2;  // q(h2 | G1)
  GinEncoder::Trace trace_h1, trace_h2, trace_c1, trace_c2;
  CrossEncoder::Trace trace_q1, trace_q2;
  Mode mode = Mode::Train;
};

/// Gradients of a scalar objective w.r.t. the outputs of a ForwardPass.
struct LatentGrads {
  Matrix node_h1, node_h2, node_c1, node_c2;
  Matrix h1, h2, c1, c2;
  Matrix q_h1_mean, q_h1_log_std, q_h2_mean, q_h2_log_std;

  static LatentGrads zeros_like(const ForwardPass& f) {
    LatentGrads g;
    const auto& l = f.latents;
    g.node_h1 = Matrix::Zero(l.node_h1.rows(), l.node_h1.cols());
    g.node_h2 = Matrix::Zero(l.node_h2.rows(), l.node_h2.cols());
    g.node_c1 = Matrix::Zero(l.node_c1.rows(), l.node_c1.cols());
    g.node_c2 = Matrix::Zero(l.node_c2.rows(), l.node_c2.cols());
    g.h1 = Matrix::Zero(l.h1.rows(), l.h1.cols());
    g.h2 = Matrix::Zero(l.h2.rows(), l.h2.cols());
    g.c1 = Matrix::Zero(l.c1.rows(), l.c1.cols());
    g.c2 = Matrix::Zero(l.c2.rows(), l.c2.cols());
    g.q_h1_mean = Matrix::Zero(f.q_h1.mean.rows(), f.q_h1.mean.cols());
    g.q_h1_log_std = g.q_h1_mean;
    g.q_h2_mean = Matrix::Zero(f.q_h2.mean.rows(), f.q_h2.mean.cols());
    g.q_h2_log_std = g.q_h2_mean;
    return g;
  }
};

/// Four view encoders (h1, h2, c1, c2), two cross encoders for q(h1|G2) and
/// q(h2|G1), and one feature decoder per reconstruction term. No weights are
/// shared between components.
class MvgibModel {
 public:
  explicit MvgibModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.feature_dim < 1) throw std::invalid_argument("model: feature_dim must be >= 1");
    cfg.encoder.validate();
    std::mt19937_64 rng(cfg.seed);
    const int d = cfg.feature_dim;
    const int h = cfg.encoder.hidden_dim;
    enc_h1_ = GinEncoder("enc_h1", d, cfg.encoder, rng);
    enc_h2_ = GinEncoder("enc_h2", d, cfg.encoder, rng);
    enc_c1_ = GinEncoder("enc_c1", d, cfg.encoder, rng);
    enc_c2_ = GinEncoder("enc_c2", d, cfg.encoder, rng);
    q_h1_ = CrossEncoder("q_h1_given_g2", d, cfg.encoder, rng);
    q_h2_ = CrossEncoder("q_h2_given_g1", d, cfg.encoder, rng);
    dec_h1_ = FeatureDecoder("dec_g1_from_h1", h, d, rng);
    dec_h2_ = FeatureDecoder("dec_g2_from_h2", h, d, rng);
    dec_c1_ = FeatureDecoder("dec_g1_from_c1", h, d, rng);
    dec_c2_ = FeatureDecoder("dec_g2_from_c2", h, d, rng);
    dec_c1_cross_ = FeatureDecoder("dec_g2_from_c1", h, d, rng);
    dec_c2_cross_ = FeatureDecoder("dec_g1_from_c2", h, d, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int hidden_dim() const { return cfg_.encoder.hidden_dim; }

  GinEncoder& encoder(EncoderId id) {
    switch (id) {
      case EncoderId::H1: return enc_h1_;
      case EncoderId::H2: return enc_h2_;
      case EncoderId::C1: return enc_c1_;
      case EncoderId::C2: return enc_c2_;
    }
    return enc_h1_;
  }
  CrossEncoder& cross_encoder(CrossDirection dir) { return dir == CrossDirection::G2ToH1 ? q_h1_ : q_h2_; }

  FeatureDecoder& decoder_h1() { return dec_h1_; }
  FeatureDecoder& decoder_h2() { return dec_h2_; }
  FeatureDecoder& decoder_c1() { return dec_c1_; }
  FeatureDecoder& decoder_c2() { return dec_c2_; }
  FeatureDecoder& cross_decoder_c1() { return dec_c1_cross_; }  // q(G2 | c1)
  FeatureDecoder& cross_decoder_c2() { return dec_c2_cross_; }  // q(G1 | c2)

  /// Node latents and sum-readout graph latents of one encoder.
  std::pair<Matrix, Matrix> encode_graph(const GraphBatch& batch, EncoderId id, Mode mode = Mode::Eval) {
    Matrix node = encoder(id).forward(batch.features, batch.adjacency, mode, nullptr);
    Matrix graph = sum_readout(node, batch.offsets);
    return {std::move(node), std::move(graph)};
  }

  GaussianParams cross_encode_gaussian(const GraphBatch& batch, CrossDirection dir, Mode mode = Mode::Eval) {
    return cross_encoder(dir).forward(batch, mode, nullptr);
  }

  ForwardPass forward(const GraphBatch& view1, const GraphBatch& view2, Mode mode) {
    check_pair(view1, view2);
    ForwardPass f;
    f.mode = mode;
    auto& l = f.latents;
    l.node_h1 = enc_h1_.forward(view1.features, view1.adjacency, mode, &f.trace_h1);
    l.node_c1 = enc_c1_.forward(view1.features, view1.adjacency, mode, &f.trace_c1);
    l.node_h2 = enc_h2_.forward(view2.features, view2.adjacency, mode, &f.trace_h2);
    l.node_c2 = enc_c2_.forward(view2.features, view2.adjacency, mode, &f.trace_c2);
    l.h1 = sum_readout(l.node_h1, view1.offsets);
    l.c1 = sum_readout(l.node_c1, view1.offsets);
    l.h2 = sum_readout(l.node_h2, view2.offsets);
    l.c2 = sum_readout(l.node_c2, view2.offsets);
    f.q_h1 = q_h1_.forward(view2, mode, &f.trace_q1);
    f.q_h2 = q_h2_.forward(view1, mode, &f.trace_q2);
    return f;
  }

  /// Inference-only latents (no traces kept).
  LatentBundle encode(const GraphBatch& view1, const GraphBatch& view2) {
    check_pair(view1, view2);
    LatentBundle l;
    l.node_h1 = enc_h1_.forward(view1.features, view1.adjacency, Mode::Eval, nullptr);
    l.node_c1 = enc_c1_.forward(view1.features, view1.adjacency, Mode::Eval, nullptr);
    l.node_h2 = enc_h2_.forward(view2.features, view2.adjacency, Mode::Eval, nullptr);
    l.node_c2 = enc_c2_.forward(view2.features, view2.adjacency, Mode::Eval, nullptr);
    l.h1 = sum_readout(l.node_h1, view1.offsets);
    l.c1 = sum_readout(l.node_c1, view1.offsets);
    l.h2 = sum_readout(l.node_h2, view2.offsets);
    l.c2 = sum_readout(l.node_c2, view2.offsets);
    return l;
  }

  /// Backpropagates latent gradients into every encoder. Decoder gradients
  /// are accumulated by the bound estimators themselves.
  void backward(const ForwardPass& f, const GraphBatch& view1, const GraphBatch& view2, const LatentGrads& g) {
    auto node_grad = [](const Matrix& node, const Matrix& graph, const std::vector<int>& offsets) -> Matrix {
      return node + sum_readout_backward(graph, offsets);
    };
    enc_h1_.backward(f.trace_h1, view1.adjacency, node_grad(g.node_h1, g.h1, view1.offsets));
    enc_c1_.backward(f.trace_c1, view1.adjacency, node_grad(g.node_c1, g.c1, view1.offsets));
    enc_h2_.backward(f.trace_h2, view2.adjacency, node_grad(g.node_h2, g.h2, view2.offsets));
    enc_c2_.backward(f.trace_c2, view2.adjacency, node_grad(g.node_c2, g.c2, view2.offsets));
    q_h1_.backward(f.trace_q1, view2, f.q_h1, g.q_h1_mean, g.q_h1_log_std);
    q_h2_.backward(f.trace_q2, view1, f.q_h2, g.q_h2_mean, g.q_h2_log_std);
  }

  ParamList parameters() {
    ParamList out;
    enc_h1_.append_params(out);
    enc_h2_.append_params(out);
    enc_c1_.append_params(out);
    enc_c2_.append_params(out);
    q_h1_.append_params(out);
    q_h2_.append_params(out);
    dec_h1_.append_params(out);
    dec_h2_.append_params(out);
    dec_c1_.append_params(out);
    dec_c2_.append_params(out);
    dec_c1_cross_.append_params(out);
    dec_c2_cross_.append_params(out);
    return out;
  }

  /// Parameters of the two cross encoders only.
  ParamList q_parameters() {
    ParamList out;
    q_h1_.append_params(out);
    q_h2_.append_params(out);
    return out;
  }

  /// Everything except the cross encoders.
  ParamList main_parameters() {
    ParamList out;
    for (Param* p : parameters()) {
      const bool is_q = p->name.rfind("q_h1_given_g2", 0) == 0 || p->name.rfind("q_h2_given_g1", 0) == 0;
      if (!is_q) out.push_back(p);
    }
    return out;
  }

  void zero_grad() {
    for (Param* p : parameters()) p->zero_grad();
  }

 private:
  static void check_pair(const GraphBatch& a, const GraphBatch& b) {
    if (a.offsets != b.offsets) throw std::invalid_argument("view batches must share graph offsets");
  }

  ModelConfig cfg_;
  GinEncoder enc_h1_, enc_h2_, enc_c1_, enc_c2_;
  CrossEncoder q_h1_, q_h2_;
  FeatureDecoder dec_h1_, dec_h2_, dec_c1_, dec_c2_, dec_c1_cross_, dec_c2_cross_;
};

}  // namespace mvgib
