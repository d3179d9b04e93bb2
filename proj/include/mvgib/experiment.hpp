#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvgib/checkpoint.hpp"
#include "mvgib/config.hpp"
#include "mvgib/evaluation.hpp"
#include "mvgib/seed.hpp"
#include "mvgib/trainer.hpp"
#include "mvgib/tu_dataset.hpp"
#include "mvgib/views.hpp"

namespace mvgib {

/// Loads the configured dataset and fills in degree features when it has no
/// node labels.
inline Dataset load_dataset(const ExperimentConfig& c) {
  Dataset d = load_tu_dataset(c.data_root, c.dataset);
  d.graphs = degree_onehot_features(std::move(d.graphs), c.degree_cap);
  d.meta.feature_dim = d.graphs.empty() ? 0 : d.graphs.front().feature_dim();
  return d;
}

/// Applies the configured perturbation to every graph, then builds both
/// views from the perturbed graph.
inline std::vector<MultiviewGraph> prepare_views(const ExperimentConfig& c, const std::vector<Graph>& graphs) {
  std::vector<Graph> source;
  source.reserve(graphs.size());
  const std::uint64_t base = sub_seed(c.seed, "perturb");
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    source.push_back(c.perturb_rate > 0.0
                         ? perturb_edges(graphs[i], c.perturb_rate, c.perturb_mode, splitmix64(base + i))
                         : graphs[i]);
  }
  return build_multiview(source, c.view1, c.view2);
}

inline std::vector<int> labels_of(const std::vector<MultiviewGraph>& views) {
  std::vector<int> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.view1.label());
  return out;
}

inline std::string parts_string(RepresentationParts p) {
  if (p.common && p.specific) return "c1,c2,h1,h2";
  return p.common ? "c1,c2" : "h1,h2";
}

inline RepresentationParts parse_parts(const std::string& s) {
  if (s == "c1,c2,h1,h2" || s.empty()) return {};
  if (s == "c1,c2") return {true, false};
  if (s == "h1,h2") return {false, true};
  throw CheckpointError("unknown representation parts '" + s + "'");
}

/// Scores embeddings for the configured task (classification or clustering).
inline EvalReport evaluate_embeddings(const ExperimentConfig& c, const Matrix& embeddings,
                                      const std::vector<int>& labels, EvalTask task, const std::string& tag) {
  EvalReport r;
  if (task == EvalTask::Cluster) {
    ClusterOptions opts;
    opts.restarts = c.kmeans_restarts;
    r = kmeans_scores(embeddings, labels, sub_seed(c.seed, "kmeans"), opts);
  } else {
    r = svm_cv_accuracy(embeddings, labels, c.folds, c.svm, sub_seed(c.seed, "folds"));
    r.task = task;
    r.perturb_rate = c.perturb_rate;
  }
  r.config_fingerprint = fingerprint(c.settings.serialize() + "parts = " + tag + "\n");
  return r;
}

struct RunResult {
  TrainResult train;
  Matrix embeddings;
  EvalReport report;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

/// Trains on prepared views. With `out_dir` set, writes the resolved config
/// (config.ini), metrics.jsonl and checkpoints there.
inline TrainResult train_experiment(const ExperimentConfig& c, const std::vector<MultiviewGraph>& views,
                                    RepresentationParts parts, const std::optional<std::filesystem::path>& out_dir) {
  TrainOutputs outputs;
  std::ofstream metrics;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "config.ini", c.settings.serialize());
    metrics.open(*out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw Error("cannot write " + (*out_dir / "metrics.jsonl").string());
    outputs.metrics = &metrics;
    outputs.checkpoint_dir = *out_dir;
    outputs.checkpoint_metadata = {{"config", c.settings.serialize()}, {"parts", parts_string(parts)}};
  }
  return train(views, c.train, outputs);
}

/// Trains, extracts embeddings and evaluates; report.json joins the other
/// artifacts in `out_dir`.
inline RunResult run_experiment(const ExperimentConfig& c, const std::vector<MultiviewGraph>& views,
                                RepresentationParts parts, EvalTask task,
                                const std::optional<std::filesystem::path>& out_dir) {
  RunResult res{train_experiment(c, views, parts, out_dir), {}, {}};
  res.embeddings = extract_representations(res.train.model, views, parts);
  res.report = evaluate_embeddings(c, res.embeddings, labels_of(views), task, parts_string(parts));
  if (out_dir) write_text(*out_dir / "report.json", to_json(res.report).dump(2) + "\n");
  return res;
}

enum class Ablation { FeatRecon, NoConsistency, NoComplementarity, ViewPairs, ReconOnly };

inline Ablation parse_ablation(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::toupper(ch); });
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "FEAT_RECON") return Ablation::FeatRecon;
  if (s == "NO_CONSISTENCY") return Ablation::NoConsistency;
  if (s == "NO_COMPLEMENTARITY") return Ablation::NoComplementarity;
  if (s == "VIEW_PAIRS") return Ablation::ViewPairs;
  if (s == "RECON_ONLY") return Ablation::ReconOnly;
  throw std::invalid_argument("unknown ablation '" + s +
                              "' (expected FEAT_RECON, NO_CONSISTENCY, NO_COMPLEMENTARITY, VIEW_PAIRS or RECON_ONLY)");
}

/// One configuration taking part in a comparison.
struct Variant {
  std::string name;
  ExperimentConfig config;
  RepresentationParts parts;
};

inline ExperimentConfig with_settings(const ExperimentConfig& c, const std::map<std::string, std::string>& changes) {
  Settings s = c.settings;
  for (const auto& [k, v] : changes) s.set(k, v);
  return resolve(s);
}

/// The view pairs compared in the view ablation, in reporting order.
inline const std::vector<std::string>& ablation_view_pairs() {
  static const std::vector<std::string> pairs = {"adj,knn", "adj,dknn", "adj,ppr", "knn,dknn", "knn,ppr", "ppr,dknn"};
  return pairs;
}

/// Variants of an ablation. Every variant except VIEW_PAIRS is paired with
/// the unmodified configuration as its first row.
inline std::vector<Variant> ablation_variants(const ExperimentConfig& c, Ablation which) {
  std::vector<Variant> out;
  switch (which) {
    case Ablation::FeatRecon:
      out.push_back({"with_feature_recon", with_settings(c, {{"feature_recon", "true"}}), {}});
      out.push_back({"without_feature_recon", with_settings(c, {{"feature_recon", "false"}}), {}});
      break;
    case Ablation::NoConsistency:
      out.push_back({"full", c, {}});
      out.push_back({"without_consistency", with_settings(c, {{"gamma", "0"}}), {false, true}});
      break;
    case Ablation::NoComplementarity:
      out.push_back({"full", c, {}});
      out.push_back({"without_complementarity", with_settings(c, {{"beta", "0"}}), {true, false}});
      break;
    case Ablation::ReconOnly:
      out.push_back({"full", c, {}});
      out.push_back({"reconstruction_only", with_settings(c, {{"beta", "0"}, {"gamma", "0"}}), {}});
      break;
    case Ablation::ViewPairs:
      for (const auto& pair : ablation_view_pairs()) {
        std::string name = pair;
        std::replace(name.begin(), name.end(), ',', '-');
        out.push_back({name, with_settings(c, {{"views", pair}}), {}});
      }
      break;
  }
  return out;
}

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

struct ComparisonRow {
  std::string name;
  std::string views;
  EvalReport report;
};

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "variant,views,mean,std\n";
  for (const auto& r : rows)
    os << r.name << ',' << '"' << r.views << '"' << ',' << csv_number(r.report.mean_accuracy) << ','
       << csv_number(r.report.std_accuracy) << '\n';
  return os.str();
}

/// Trains and evaluates each variant. Datasets are loaded once; views are
/// rebuilt per variant. Artifacts of variant v go to out_dir/v.
inline std::vector<ComparisonRow> run_variants(const std::vector<Variant>& variants, const Dataset& data,
                                               const std::optional<std::filesystem::path>& out_dir) {
  std::vector<ComparisonRow> rows;
  for (const auto& v : variants) {
    const auto views = prepare_views(v.config, data.graphs);
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / v.name;
    const RunResult r = run_experiment(v.config, views, v.parts, EvalTask::Classify, dir);
    rows.push_back({v.name, v.config.settings.get("views"), r.report});
  }
  return rows;
}

struct SweepCell {
  double beta = 0.0, gamma = 0.0;
  EvalReport report;
};

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "beta,gamma,mean,std\n";
  for (const auto& c : cells)
    os << csv_number(c.beta) << ',' << csv_number(c.gamma) << ',' << csv_number(c.report.mean_accuracy) << ','
       << csv_number(c.report.std_accuracy) << '\n';
  return os.str();
}

inline std::vector<SweepCell> run_sweep(const ExperimentConfig& c, const Dataset& data,
                                        const std::vector<std::string>& betas, const std::vector<std::string>& gammas,
                                        const std::optional<std::filesystem::path>& out_dir) {
  if (betas.empty() || gammas.empty()) throw ConfigError("betas", "sweep needs at least one beta and one gamma");
  std::vector<SweepCell> cells;
  for (const auto& b : betas) {
    for (const auto& g : gammas) {
      const ExperimentConfig cell = with_settings(c, {{"beta", b}, {"gamma", g}});
      const auto views = prepare_views(cell, data.graphs);
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / ("beta" + b + "_gamma" + g);
      const RunResult r = run_experiment(cell, views, {}, EvalTask::Classify, dir);
      cells.push_back({cell.train.weights.delta, cell.train.weights.zeta, r.report});
    }
  }
  return cells;
}

/// Perturbs, rebuilds views, retrains and evaluates once per rate.
inline std::vector<EvalReport> robustness_curve(const ExperimentConfig& c, const Dataset& data,
                                                const std::vector<double>& rates,
                                                const std::optional<std::filesystem::path>& out_dir) {
  std::vector<EvalReport> out;
  for (double rate : rates) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("perturb_rates", "perturb rates must lie in [0, 1]");
    const ExperimentConfig cell = with_settings(c, {{"perturb_rate", csv_number(rate)}});
    const auto views = prepare_views(cell, data.graphs);
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / ("rate" + csv_number(rate));
    out.push_back(run_experiment(cell, views, {}, EvalTask::Robustness, dir).report);
  }
  return out;
}

inline std::string robustness_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "rate,mean,std\n";
  for (const auto& r : reports)
    os << csv_number(r.perturb_rate) << ',' << csv_number(r.mean_accuracy) << ',' << csv_number(r.std_accuracy)
       << '\n';
  return os.str();
}

}  // namespace mvgib
