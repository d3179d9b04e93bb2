#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvgib/error.hpp"
#include "mvgib/evaluation.hpp"
#include "mvgib/trainer.hpp"
#include "mvgib/views.hpp"

namespace mvgib {

/// Environment variable consulted when no data root is configured.
inline constexpr const char* kDataRootEnv = "MVGIB_DATA_ROOT";

struct ConfigKey {
  const char* section;
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every recognized key. Key names are unique across sections, so a flat
/// `--name` flag can override any of them.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"run", "seed", "0", "top-level seed; every random stream derives from it"},
      {"run", "out", "runs/mvgib", "output directory"},
      {"data", "dataset", "MUTAG", "TU dataset name"},
      {"data", "data_root", "", "directory holding <dataset>/ (falls back to $MVGIB_DATA_ROOT)"},
      {"data", "degree_cap", "0", "clip one-hot degree features at this degree (0 = no cap)"},
      {"views", "views", "adj,knn", "view pair, two distinct kinds out of adj, knn, dknn, ppr"},
      {"views", "knn_k", "5", "neighbours per node in the knn view"},
      {"views", "dknn_k", "10", "neighbourhood size of the dknn view"},
      {"views", "dknn_dilation", "5", "most-similar nodes skipped by the dknn view"},
      {"views", "ppr_alpha", "0.15", "teleport probability of the ppr view"},
      {"views", "ppr_top_k", "5", "entries kept per row of the ppr view"},
      {"views", "ppr_self_loops", "true", "add self-loops before normalizing the ppr operator"},
      {"train", "epochs", "100", "training epochs"},
      {"train", "lr", "0.01", "initial learning rate"},
      {"train", "lr_decay", "0.5", "learning-rate decay factor"},
      {"train", "decay_every", "50", "epochs between decays (and checkpoints)"},
      {"train", "batch_size", "128", "graphs per mini-batch"},
      {"train", "hidden_dim", "64", "latent width"},
      {"train", "layers", "5", "GIN layers per encoder"},
      {"train", "batch_norm", "true", "batch normalization inside GIN layers"},
      {"train", "log_wall_time", "false", "add wall-clock seconds to metrics records"},
      {"objective", "beta", "1", "weight of both CLUB terms"},
      {"objective", "gamma", "1", "weight of both cross-view reconstruction terms"},
      {"objective", "feature_recon", "true", "include the feature likelihood in reconstruction terms"},
      {"objective", "detach_negative_latents", "false", "stop CLUB gradients through negative pairs"},
      {"objective", "club_grad_to_q", "true", "let CLUB gradients reach the variational q"},
      {"objective", "club_alternating", "false", "fit q in its own optimizer step before each main step"},
      {"eval", "task", "classify", "classify, cluster or robustness"},
      {"eval", "folds", "10", "cross-validation folds"},
      {"eval", "svm_c", "5", "SVM regularization C"},
      {"eval", "svm_kernel", "rbf", "rbf or linear"},
      {"eval", "kmeans_restarts", "10", "K-Means restarts"},
      {"perturb", "perturb_mode", "remove", "add or remove"},
      {"perturb", "perturb_rate", "0", "fraction of edges added or removed before building views"},
      {"perturb", "perturb_rates", "0.25,0.5,0.75", "rates of the robustness curve"},
  };
  return keys;
}

inline bool is_config_key(const std::string& name) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return name == k.name; });
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Raw key/value settings; every recognized key is always present.
class Settings {
 public:
  Settings() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  /// Parses `key = value` lines; `[section]` headers, blank lines and `#` or
  /// `;` comments are allowed. Unknown keys raise ConfigError.
  static Settings parse(const std::string& text, const std::string& origin = "config") {
    Settings s;
    std::stringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(line, origin + ":" + std::to_string(line_no) + ": bad section header");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(line, origin + ":" + std::to_string(line_no) + ": expected key = value");
      s.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return s;
  }

  static Settings load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, const std::string& value) {
    if (!is_config_key(key)) throw ConfigError(key, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "unknown config key '" + key + "'");
    return it->second;
  }

  /// Canonical text form, one section per block in a fixed key order.
  std::string serialize() const {
    std::ostringstream os;
    std::string section;
    for (const auto& k : config_keys()) {
      if (section != k.section) {
        if (!section.empty()) os << '\n';
        section = k.section;
        os << '[' << section << "]\n";
      }
      os << k.name << " = " << values_.at(k.name) << '\n';
    }
    return os.str();
  }

 private:
  std::map<std::string, std::string> values_;
};

struct ExperimentConfig {
  std::string dataset = "MUTAG";
  std::filesystem::path data_root;
  int degree_cap = 0;
  ViewSpec view1, view2;
  TrainConfig train;
  EvalTask task = EvalTask::Classify;
  int folds = 10;
  SvmOptions svm;
  int kmeans_restarts = 10;
  PerturbMode perturb_mode = PerturbMode::Remove;
  double perturb_rate = 0.0;
  std::vector<double> perturb_rates;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  Settings settings;  // the resolved key/value form this config was built from
};

namespace detail {

template <class T>
T parse_value(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (v.empty() || is.fail() || !is.eof()) throw ConfigError(key, "invalid value '" + v + "' for " + key);
  return out;
}

template <class T>
T parse_number(const Settings& s, const std::string& key) {
  return parse_value<T>(s.get(key), key);
}

inline bool parse_bool(const Settings& s, const std::string& key) {
  std::string v = s.get(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "invalid boolean '" + v + "' for " + key);
}

template <class F>
auto checked(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, key + ": " + e.what());
  }
}

}  // namespace detail

/// Fallback data root when neither the config nor the environment names one.
inline std::filesystem::path default_data_root() {
#ifdef MVGIB_DEFAULT_DATA_ROOT
  return MVGIB_DEFAULT_DATA_ROOT;
#else
  return "data";
#endif
}

/// Validates settings and builds the typed configuration.
inline ExperimentConfig resolve(const Settings& s) {
  using detail::checked;
  using detail::parse_bool;
  using detail::parse_number;
  ExperimentConfig c;
  c.settings = s;
  c.seed = parse_number<std::uint64_t>(s, "seed");
  c.out = s.get("out");
  if (c.out.empty()) throw ConfigError("out", "out must not be empty");
  c.dataset = s.get("dataset");
  if (c.dataset.empty()) throw ConfigError("dataset", "dataset must not be empty");
  if (!s.get("data_root").empty()) {
    c.data_root = s.get("data_root");
  } else if (const char* env = std::getenv(kDataRootEnv); env && *env) {
    c.data_root = env;
  } else {
    c.data_root = default_data_root();
  }
  c.degree_cap = parse_number<int>(s, "degree_cap");
  if (c.degree_cap < 0) throw ConfigError("degree_cap", "degree_cap must be >= 0");

  const auto kinds = detail::split_list(s.get("views"));
  if (kinds.size() != 2) throw ConfigError("views", "views must name exactly two view kinds");
  ViewSpec base;
  base.alpha = parse_number<double>(s, "ppr_alpha");
  base.ppr_top_k = parse_number<int>(s, "ppr_top_k");
  const bool self_loops = parse_bool(s, "ppr_self_loops");
  auto make_view = [&](const std::string& name) {
    ViewSpec v = base;
    v.kind = checked("views", [&] { return parse_view_kind(name); });
    if (v.kind == ViewKind::Knn) {
      v.k = parse_number<int>(s, "knn_k");
    } else if (v.kind == ViewKind::Dknn) {
      v.k = parse_number<int>(s, "dknn_k");
      v.dilation = parse_number<int>(s, "dknn_dilation");
    }
    v.ppr_self_loops = self_loops;
    checked("views", [&] { v.validate(); return 0; });
    return v;
  };
  c.view1 = make_view(kinds[0]);
  c.view2 = make_view(kinds[1]);
  if (c.view1.kind == c.view2.kind) throw ConfigError("views", "the two views must be of different kinds");

  TrainConfig& t = c.train;
  t.epochs = parse_number<int>(s, "epochs");
  t.lr = parse_number<double>(s, "lr");
  t.lr_decay = parse_number<double>(s, "lr_decay");
  t.decay_every = parse_number<int>(s, "decay_every");
  t.batch_size = parse_number<int>(s, "batch_size");
  t.encoder.hidden_dim = parse_number<int>(s, "hidden_dim");
  t.encoder.layers = parse_number<int>(s, "layers");
  t.encoder.batch_norm = parse_bool(s, "batch_norm");
  t.log_wall_time = parse_bool(s, "log_wall_time");
  t.seed = c.seed;
  const double beta = parse_number<double>(s, "beta");
  const double gamma = parse_number<double>(s, "gamma");
  if (beta < 0) throw ConfigError("beta", "beta must be >= 0");
  if (gamma < 0) throw ConfigError("gamma", "gamma must be >= 0");
  t.weights = LossWeights::from_beta_gamma(beta, gamma);
  t.objective.feature_recon = parse_bool(s, "feature_recon");
  t.objective.club.detach_negative_latents = parse_bool(s, "detach_negative_latents");
  t.objective.club.grad_to_q = parse_bool(s, "club_grad_to_q");
  t.club_alternating = parse_bool(s, "club_alternating");
  if (t.epochs <= 0) throw ConfigError("epochs", "epochs must be > 0");
  if (!(t.lr > 0)) throw ConfigError("lr", "lr must be > 0");
  if (!(t.lr_decay > 0)) throw ConfigError("lr_decay", "lr_decay must be > 0");
  if (t.decay_every <= 0) throw ConfigError("decay_every", "decay_every must be > 0");
  if (t.batch_size <= 0) throw ConfigError("batch_size", "batch_size must be > 0");
  if (t.encoder.hidden_dim < 1) throw ConfigError("hidden_dim", "hidden_dim must be >= 1");
  if (t.encoder.layers < 1) throw ConfigError("layers", "layers must be >= 1");

  c.task = checked("task", [&] { return parse_eval_task(s.get("task")); });
  c.folds = parse_number<int>(s, "folds");
  if (c.folds < 2) throw ConfigError("folds", "folds must be >= 2");
  c.svm.C = parse_number<double>(s, "svm_c");
  if (!(c.svm.C > 0)) throw ConfigError("svm_c", "svm_c must be > 0");
  c.svm.kernel = checked("svm_kernel", [&] { return parse_svm_kernel(s.get("svm_kernel")); });
  c.kmeans_restarts = parse_number<int>(s, "kmeans_restarts");
  if (c.kmeans_restarts < 1) throw ConfigError("kmeans_restarts", "kmeans_restarts must be >= 1");

  c.perturb_mode = checked("perturb_mode", [&] { return parse_perturb_mode(s.get("perturb_mode")); });
  c.perturb_rate = parse_number<double>(s, "perturb_rate");
  if (!(c.perturb_rate >= 0 && c.perturb_rate <= 1)) throw ConfigError("perturb_rate", "perturb_rate must lie in [0, 1]");
  for (const auto& r : detail::split_list(s.get("perturb_rates"))) {
    const double v = detail::parse_value<double>(r, "perturb_rates");
    if (!(v >= 0 && v <= 1)) throw ConfigError("perturb_rates", "perturb_rates must lie in [0, 1]");
    c.perturb_rates.push_back(v);
  }
  return c;
}

}  // namespace mvgib
