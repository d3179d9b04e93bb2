#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mvgib {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

enum class Mode { Train, Eval };

/// A named tensor with its gradient. Non-trainable entries are buffers
/// (batch-norm running statistics) that are checkpointed but not optimized.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
        trainable(train) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParamList = std::vector<Param*>;

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

inline Matrix elu(const Matrix& x) { return x.unaryExpr([](double v) { return elu(v); }); }

/// Gradient through ELU given its output.
inline Matrix elu_backward(const Matrix& out, const Matrix& d_out) {
  return d_out.binaryExpr(out, [](double g, double y) { return y > 0.0 ? g : g * (y + 1.0); });
}

/// y = x W + b, with W stored in x out layout.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, std::mt19937_64& rng)
      : weight_(name + ".weight", Matrix(in, out)), bias_(name + ".bias", Matrix(1, out)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < bias_.value.size(); ++i) bias_.value.data()[i] = u(rng);
  }

  int in_dim() const { return static_cast<int>(weight_.value.rows()); }
  int out_dim() const { return static_cast<int>(weight_.value.cols()); }

  Matrix forward(const Matrix& x) const {
    Matrix y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns d input.
  Matrix backward(const Matrix& x, const Matrix& d_out) {
    weight_.grad.noalias() += x.transpose() * d_out;
    bias_.grad.row(0) += d_out.colwise().sum();
    return d_out * weight_.value.transpose();
  }

  void set_identity() {
    weight_.value.setIdentity();
    bias_.value.setZero();
  }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

  void append_params(ParamList& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Param weight_;
  Param bias_;
};

/// Feature-wise batch normalization over the rows of a matrix.
class BatchNorm {
 public:
  struct Trace {
    Matrix normalized;
    RowVector inv_std;
  };

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, int dim)
      : gamma_(name + ".gamma", Matrix::Ones(1, dim)), beta_(name + ".beta", Matrix::Zero(1, dim)),
        running_mean_(name + ".running_mean", Matrix::Zero(1, dim), false),
        running_var_(name + ".running_var", Matrix::Ones(1, dim), false) {}

  Matrix forward(const Matrix& x, Mode mode, Trace* trace) {
    RowVector mean, var;
    if (mode == Mode::Train) {
      const double n = static_cast<double>(x.rows());
      mean = x.colwise().mean();
      var = (x.rowwise() - mean).array().square().colwise().sum() / n;
      const double unbiased = x.rows() > 1 ? n / (n - 1.0) : 1.0;
      running_mean_.value.row(0) = (1.0 - kMomentum) * running_mean_.value.row(0) + kMomentum * mean;
      running_var_.value.row(0) =
          (1.0 - kMomentum) * running_var_.value.row(0) + kMomentum * unbiased * var;
    } else {
      mean = running_mean_.value.row(0);
      var = running_var_.value.row(0);
    }
    RowVector inv_std = (var.array() + kEps).rsqrt().matrix();
    Matrix normalized = (x.rowwise() - mean).array().rowwise() * inv_std.array();
    Matrix y = normalized.array().rowwise() * gamma_.value.row(0).array();
    y.rowwise() += beta_.value.row(0);
    if (trace) {
      trace->normalized = std::move(normalized);
      trace->inv_std = std::move(inv_std);
    }
    return y;
  }

  /// Backward pass for a training-mode forward.
  Matrix backward(const Trace& t, const Matrix& d_out) {
    const double n = static_cast<double>(d_out.rows());
    gamma_.grad.row(0) += (d_out.array() * t.normalized.array()).colwise().sum().matrix();
    beta_.grad.row(0) += d_out.colwise().sum();
    Matrix d_norm = d_out.array().rowwise() * gamma_.value.row(0).array();
    RowVector sum_d = d_norm.colwise().sum();
    RowVector sum_dx = (d_norm.array() * t.normalized.array()).colwise().sum().matrix();
    Matrix dx = (n * d_norm).rowwise() - sum_d;
    dx -= (t.normalized.array().rowwise() * sum_dx.array()).matrix();
    dx = dx.array().rowwise() * (t.inv_std.array() / n);
    return dx;
  }

  /// Backward pass for an eval-mode forward (fixed statistics).
  Matrix backward_eval(const Trace& t, const Matrix& d_out) {
    gamma_.grad.row(0) += (d_out.array() * t.normalized.array()).colwise().sum().matrix();
    beta_.grad.row(0) += d_out.colwise().sum();
    return d_out.array().rowwise() * (gamma_.value.row(0).array() * t.inv_std.array());
  }

  void append_params(ParamList& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }

 private:
  Param gamma_;
  Param beta_;
  Param running_mean_;
  Param running_var_;
};

/// Adam with bias correction. Only trainable parameters are updated.
class Adam {
 public:
  Adam(ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      if (!p.trainable) continue;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  ParamList params_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace mvgib
