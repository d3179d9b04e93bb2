#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mvgib/graph.hpp"
#include "mvgib/log.hpp"
#include "mvgib/models.hpp"

namespace mvgib {

/// Which latent groups enter the embedding. Order is always c1, c2, h1, h2.
struct RepresentationParts {
  bool common = true;    // c1, c2
  bool specific = true;  // h1, h2
};

/// Graph embeddings in dataset order, computed with inference-mode
/// normalization.
inline Matrix extract_representations(MvgibModel& model, std::span<const MultiviewGraph> data,
                                      RepresentationParts parts = {}, int batch_size = 128) {
  if (!parts.common && !parts.specific) throw std::invalid_argument("extract_representations: no parts selected");
  const int h = model.hidden_dim();
  const int blocks = (parts.common ? 2 : 0) + (parts.specific ? 2 : 0);
  const int n = static_cast<int>(data.size());
  Matrix out(n, blocks * h);
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    std::vector<int> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto [v1, v2] = batch_graphs(data, idx);
    const LatentBundle l = model.encode(v1, v2);
    int col = 0;
    auto put = [&](const Matrix& m) {
      out.block(start, col, end - start, h) = m;
      col += h;
    };
    if (parts.common) {
      put(l.c1);
      put(l.c2);
    }
    if (parts.specific) {
      put(l.h1);
      put(l.h2);
    }
  }
  return out;
}

/// Per-column standardization with statistics from a reference set.
/// Constant columns are centred but not scaled.
struct Standardizer {
  RowVector mean, scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    const double n = static_cast<double>(x.rows());
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index c = 0; c < s.scale.size(); ++c)
      if (!(s.scale[c] > 1e-12)) s.scale[c] = 1.0;
    return s;
  }

  Matrix apply(const Matrix& x) const { return (x.rowwise() - mean).array().rowwise() / scale.array(); }
};

enum class SvmKernel { Rbf, Linear };

inline SvmKernel parse_svm_kernel(const std::string& s) {
  if (s == "rbf") return SvmKernel::Rbf;
  if (s == "linear") return SvmKernel::Linear;
  throw std::invalid_argument("unknown svm kernel '" + s + "' (expected rbf or linear)");
}

inline std::string to_string(SvmKernel k) { return k == SvmKernel::Rbf ? "rbf" : "linear"; }

struct SvmOptions {
  double C = 5.0;
  SvmKernel kernel = SvmKernel::Rbf;
  /// RBF width; <= 0 means 1 / (D * variance of the training matrix).
  double gamma = 0.0;
  double tolerance = 1e-3;
};

/// Kernel matrix between the rows of `a` and `b`.
inline Matrix kernel_matrix(const Matrix& a, const Matrix& b, SvmKernel kernel, double gamma) {
  Matrix k = a * b.transpose();
  if (kernel == SvmKernel::Linear) return k;
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::RowVectorXd nb = b.rowwise().squaredNorm().transpose();
  for (Eigen::Index j = 0; j < k.cols(); ++j)
    for (Eigen::Index i = 0; i < k.rows(); ++i) k(i, j) = std::exp(-gamma * std::max(0.0, na[i] + nb[j] - 2.0 * k(i, j)));
  return k;
}

/// Binary C-SVM dual solved by sequential minimal optimization with
/// second-order working-set selection. `y` holds +1 / -1.
struct BinarySvm {
  Eigen::VectorXd coef;  // alpha_i * y_i
  double rho = 0.0;

  static BinarySvm fit(const Matrix& k, const std::vector<int>& y, double C, double tol) {
    const int n = static_cast<int>(y.size());
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
    auto q = [&](int i, int j) { return y[i] * y[j] * k(i, j); };
    auto in_up = [&](int t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
    auto in_low = [&](int t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };
    constexpr double kTau = 1e-12;
    const long max_iter = std::max<long>(10000000L, 100L * n);

    for (long iter = 0; iter < max_iter; ++iter) {
      double gmax = -std::numeric_limits<double>::infinity();
      int i = -1;
      for (int t = 0; t < n; ++t) {
        if (in_up(t) && -y[t] * grad[t] > gmax) {
          gmax = -y[t] * grad[t];
          i = t;
        }
      }
      double gmax2 = -std::numeric_limits<double>::infinity();
      int j = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int t = 0; t < n; ++t) {
        if (!in_low(t)) continue;
        gmax2 = std::max(gmax2, y[t] * grad[t]);
        if (i < 0) continue;
        const double b = gmax + y[t] * grad[t];
        if (b > 0) {
          double a = k(i, i) + k(t, t) - 2.0 * k(i, t);
          if (a <= 0) a = kTau;
          if (-(b * b) / a < best) {
            best = -(b * b) / a;
            j = t;
          }
        }
      }
      if (i < 0 || j < 0 || gmax + gmax2 < tol) break;

      const double ai = alpha[i], aj = alpha[j];
      if (y[i] != y[j]) {
        double quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if (quad <= 0) quad = kTau;
        const double delta = (-grad[i] - grad[j]) / quad;
        const double diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if (diff > 0) {
          if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
        } else {
          if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
        }
        if (diff > 0) {
          if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
        } else {
          if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
        }
      } else {
        double quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if (quad <= 0) quad = kTau;
        const double delta = (grad[i] - grad[j]) / quad;
        const double sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if (sum > C) {
          if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
        } else {
          if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
        }
        if (sum > C) {
          if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
        } else {
          if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
        }
      }
      const double di = alpha[i] - ai, dj = alpha[j] - aj;
      for (int t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
    }

    // Offset: average over free vectors, midpoint of the feasible range otherwise.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int free = 0;
    for (int t = 0; t < n; ++t) {
      const double yg = y[t] * grad[t];
      if (alpha[t] >= C) {
        if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
      } else if (alpha[t] <= 0) {
        if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
      } else {
        ++free;
        sum_free += yg;
      }
    }
    BinarySvm svm;
    svm.rho = free > 0 ? sum_free / free : (ub + lb) / 2.0;
    svm.coef.resize(n);
    for (int t = 0; t < n; ++t) svm.coef[t] = alpha[t] * y[t];
    return svm;
  }

  /// Decision values for test rows given the test-by-train kernel block.
  Eigen::VectorXd decision(const Matrix& k_test_train) const { return (k_test_train * coef).array() - rho; }
};

/// Multiclass C-SVM via one-vs-one voting (ties go to the lower class).
class SvmClassifier {
 public:
  void fit(const Matrix& x, std::span<const int> labels, const SvmOptions& opts) {
    opts_ = opts;
    train_ = x;
    classes_.assign(labels.begin(), labels.end());
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    if (classes_.size() < 2) throw std::invalid_argument("svm: need at least two classes");
    gamma_ = opts.gamma;
    if (gamma_ <= 0.0) {
      const double mean = x.mean();
      const double var = (x.array() - mean).square().mean();
      gamma_ = var > 0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
    }
    const Matrix k = kernel_matrix(x, x, opts.kernel, gamma_);
    models_.clear();
    for (std::size_t a = 0; a < classes_.size(); ++a) {
      for (std::size_t b = a + 1; b < classes_.size(); ++b) {
        Pair p;
        p.a = static_cast<int>(a);
        p.b = static_cast<int>(b);
        std::vector<int> y;
        for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
          if (labels[i] == classes_[a] || labels[i] == classes_[b]) {
            p.rows.push_back(i);
            y.push_back(labels[i] == classes_[a] ? 1 : -1);
          }
        }
        Matrix sub(p.rows.size(), p.rows.size());
        for (std::size_t r = 0; r < p.rows.size(); ++r)
          for (std::size_t c = 0; c < p.rows.size(); ++c) sub(r, c) = k(p.rows[r], p.rows[c]);
        p.svm = BinarySvm::fit(sub, y, opts.C, opts.tolerance);
        models_.push_back(std::move(p));
      }
    }
  }

  std::vector<int> predict(const Matrix& x) const {
    const Matrix k = kernel_matrix(x, train_, opts_.kernel, gamma_);
    std::vector<std::vector<int>> votes(x.rows(), std::vector<int>(classes_.size(), 0));
    for (const auto& p : models_) {
      Matrix block(x.rows(), p.rows.size());
      for (std::size_t c = 0; c < p.rows.size(); ++c) block.col(c) = k.col(p.rows[c]);
      const Eigen::VectorXd dec = p.svm.decision(block);
      for (Eigen::Index r = 0; r < x.rows(); ++r) ++votes[r][dec[r] > 0 ? p.a : p.b];
    }
    std::vector<int> out(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto& v = votes[r];
      out[r] = classes_[std::max_element(v.begin(), v.end()) - v.begin()];
    }
    return out;
  }

  double gamma() const { return gamma_; }

 private:
  struct Pair {
    int a = 0, b = 0;
    std::vector<int> rows;
    BinarySvm svm;
  };
  SvmOptions opts_;
  Matrix train_;
  std::vector<int> classes_;
  std::vector<Pair> models_;
  double gamma_ = 1.0;
};

enum class EvalTask { Classify, Cluster, Robustness };

inline std::string to_string(EvalTask t) {
  switch (t) {
    case EvalTask::Classify: return "classify";
    case EvalTask::Cluster: return "cluster";
    case EvalTask::Robustness: return "robustness";
  }
  return "?";
}

inline EvalTask parse_eval_task(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "classify") return EvalTask::Classify;
  if (s == "cluster") return EvalTask::Cluster;
  if (s == "robustness") return EvalTask::Robustness;
  throw std::invalid_argument("unknown task '" + s + "' (expected classify, cluster or robustness)");
}

/// Accuracies are percentages.
struct EvalReport {
  EvalTask task = EvalTask::Classify;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  std::vector<double> per_fold;
  std::string config_fingerprint;
  double perturb_rate = 0.0;  // robustness entries only
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {{"task", to_string(r.task)},
                      {"config_fingerprint", r.config_fingerprint}};
  if (r.task != EvalTask::Cluster) {
    j["mean_accuracy"] = r.mean_accuracy;
    j["std_accuracy"] = r.std_accuracy;
    j["per_fold"] = r.per_fold;
  }
  if (r.task == EvalTask::Cluster) {
    j["nmi"] = r.nmi;
    j["ari"] = r.ari;
  }
  if (r.task == EvalTask::Robustness) j["perturb_rate"] = r.perturb_rate;
  return j;
}

/// Stable 64-bit hex digest of a string, used to tag reports with the
/// configuration that produced them.
inline std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// k-fold SVM accuracy. Features are standardized with train-fold
/// statistics. Folds whose training part has a single class are skipped.
inline EvalReport svm_cv_accuracy(const Matrix& embeddings, std::span<const int> labels, int k,
                                  const SvmOptions& opts, std::uint64_t seed) {
  if (embeddings.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("svm_cv_accuracy: embedding rows and labels differ");
  EvalReport report;
  report.task = EvalTask::Classify;
  for (const Fold& fold : split_folds(labels, k, seed)) {
    std::vector<int> ytr, yte;
    Matrix xtr(fold.train.size(), embeddings.cols()), xte(fold.test.size(), embeddings.cols());
    for (std::size_t i = 0; i < fold.train.size(); ++i) {
      xtr.row(i) = embeddings.row(fold.train[i]);
      ytr.push_back(labels[fold.train[i]]);
    }
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
      xte.row(i) = embeddings.row(fold.test[i]);
      yte.push_back(labels[fold.test[i]]);
    }
    if (std::adjacent_find(ytr.begin(), ytr.end(), std::not_equal_to<>()) == ytr.end()) {
      log::warn("svm: skipping a fold whose training part has a single class");
      continue;
    }
    const Standardizer st = Standardizer::fit(xtr);
    SvmClassifier clf;
    clf.fit(st.apply(xtr), ytr, opts);
    const auto pred = clf.predict(st.apply(xte));
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == yte[i] ? 1 : 0;
    report.per_fold.push_back(100.0 * correct / static_cast<double>(pred.size()));
  }
  if (report.per_fold.empty()) throw std::runtime_error("svm_cv_accuracy: every fold was skipped");
  const double m = std::accumulate(report.per_fold.begin(), report.per_fold.end(), 0.0) / report.per_fold.size();
  double v = 0.0;
  for (double a : report.per_fold) v += (a - m) * (a - m);
  report.mean_accuracy = m;
  report.std_accuracy = std::sqrt(v / report.per_fold.size());
  return report;
}

inline EvalReport svm_cv_accuracy(const Matrix& embeddings, std::span<const int> labels, int k, double C,
                                  std::uint64_t seed, SvmKernel kernel = SvmKernel::Rbf) {
  SvmOptions opts;
  opts.C = C;
  opts.kernel = kernel;
  return svm_cv_accuracy(embeddings, labels, k, opts, seed);
}

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0.0;
};

namespace detail {

inline KMeansResult kmeans_once(const Matrix& x, int k, std::mt19937_64& rng, int max_iter) {
  const int n = static_cast<int>(x.rows());
  Matrix c(k, x.cols());
  // k-means++ seeding
  std::uniform_int_distribution<int> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  Eigen::VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    int chosen = 0;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        r -= d2[chosen];
        if (r <= 0) break;
      }
    } else {
      chosen = pick(rng);
    }
    c.row(j) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  Eigen::VectorXd dist(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (x.row(i) - c.row(j)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      dist[i] = bd;
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(res.assignment[i]) += x.row(i);
      ++counts[res.assignment[i]];
    }
    bool reseeded = false;
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        c.row(j) = sums.row(j) / counts[j];
      } else {
        // Empty cluster: move its centroid to the point farthest from its own centroid.
        int far = static_cast<int>(std::max_element(dist.data(), dist.data() + n) - dist.data());
        c.row(j) = x.row(far);
        dist[far] = 0.0;
        reseeded = true;
      }
    }
    if (!changed && !reseeded) break;
  }
  res.inertia = 0.0;
  for (int i = 0; i < n; ++i) res.inertia += (x.row(i) - c.row(res.assignment[i])).squaredNorm();
  res.centroids = std::move(c);
  return res;
}

inline std::vector<std::vector<double>> contingency(std::span<const int> a, std::span<const int> b) {
  std::map<int, int> ia, ib;
  for (int v : a) ia.emplace(v, static_cast<int>(ia.size()));
  for (int v : b) ib.emplace(v, static_cast<int>(ib.size()));
  std::vector<std::vector<double>> t(ia.size(), std::vector<double>(ib.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) t[ia[a[i]]][ib[b[i]]] += 1.0;
  return t;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best inertia over `restarts`.
inline KMeansResult kmeans(const Matrix& x, int k, int restarts, std::uint64_t seed, int max_iter = 300) {
  if (k < 1 || x.rows() < k) throw std::invalid_argument("kmeans: need 1 <= k <= number of rows");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult res = detail::kmeans_once(x, k, rng, max_iter);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

/// Normalized mutual information with arithmetic-mean normalization.
inline double nmi(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size() || truth.empty()) throw std::invalid_argument("nmi: size mismatch");
  const auto t = detail::contingency(truth, pred);
  const double n = static_cast<double>(truth.size());
  std::vector<double> ra(t.size(), 0.0), cb(t.front().size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[i].size(); ++j) {
      ra[i] += t[i][j];
      cb[j] += t[i][j];
    }
  auto entropy = [n](const std::vector<double>& c) {
    double h = 0.0;
    for (double v : c)
      if (v > 0) h -= v / n * std::log(v / n);
    return h;
  };
  const double ha = entropy(ra), hb = entropy(cb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[i].size(); ++j)
      if (t[i][j] > 0) mi += t[i][j] / n * std::log(n * t[i][j] / (ra[i] * cb[j]));
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

/// Adjusted Rand index.
inline double ari(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size() || truth.empty()) throw std::invalid_argument("ari: size mismatch");
  const auto t = detail::contingency(truth, pred);
  auto comb2 = [](double v) { return v * (v - 1.0) / 2.0; };
  const double n = static_cast<double>(truth.size());
  std::vector<double> ra(t.size(), 0.0), cb(t.front().size(), 0.0);
  double sum_ij = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[i].size(); ++j) {
      ra[i] += t[i][j];
      cb[j] += t[i][j];
      sum_ij += comb2(t[i][j]);
    }
  double sum_a = 0.0, sum_b = 0.0;
  for (double v : ra) sum_a += comb2(v);
  for (double v : cb) sum_b += comb2(v);
  const double expected = sum_a * sum_b / comb2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

struct ClusterOptions {
  int restarts = 10;
  bool standardize = true;
};

/// K-Means with k = number of distinct labels, scored by NMI and ARI.
inline EvalReport kmeans_scores(const Matrix& embeddings, std::span<const int> labels, std::uint64_t seed,
                                const ClusterOptions& opts = {}) {
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const Matrix x = opts.standardize ? Standardizer::fit(embeddings).apply(embeddings) : embeddings;
  const KMeansResult km = kmeans(x, static_cast<int>(classes.size()), opts.restarts, seed);
  EvalReport r;
  r.task = EvalTask::Cluster;
  r.nmi = nmi(labels, km.assignment);
  r.ari = ari(labels, km.assignment);
  return r;
}

}  // namespace mvgib
