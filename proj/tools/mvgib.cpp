// Command-line front end: train, eval, ablate, sweep, perturb.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvgib/mvgib.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Config file plus per-key overrides shared by every subcommand.
struct CommonArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    for (const auto& key : mvgib::config_keys()) {
      cmd->add_option_function<std::string>(
             flag_name(key.name), [this, name = std::string(key.name)](const std::string& v) { overrides[name] = v; },
             key.help)
          ->group(std::string("Config [") + key.section + "]");
    }
  }

  mvgib::ExperimentConfig resolve() const {
    mvgib::Settings s = config_path.empty() ? mvgib::Settings{} : mvgib::Settings::load(config_path);
    for (const auto& [k, v] : overrides) s.set(k, v);
    return mvgib::resolve(s);
  }
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

int cmd_train(const mvgib::ExperimentConfig& c) {
  const auto data = mvgib::load_dataset(c);
  const auto views = mvgib::prepare_views(c, data.graphs);
  const auto result = mvgib::train_experiment(c, views, {}, c.out);
  std::cout << "trained " << c.train.epochs << " epochs on " << data.meta.name << " (" << views.size()
            << " graphs); final loss " << result.epoch_loss.back() << "\nartifacts: " << c.out.string() << std::endl;
  return 0;
}

int cmd_eval(const std::filesystem::path& checkpoint, const CommonArgs& args, bool task_given) {
  if (!std::filesystem::exists(checkpoint)) {
    std::cerr << "error: checkpoint not found: " << checkpoint.string() << std::endl;
    return kExitConfig;
  }
  mvgib::Checkpoint info;
  mvgib::MvgibModel model = mvgib::load_checkpoint(checkpoint, &info);
  // The stored config reproduces the training data; command-line flags may
  // still change evaluation settings.
  mvgib::Settings s = mvgib::Settings::parse(info.metadata.count("config") ? info.metadata.at("config") : "",
                                             "checkpoint config");
  for (const auto& [k, v] : args.overrides) s.set(k, v);
  if (!task_given) s.set("task", "classify");
  const mvgib::ExperimentConfig c = mvgib::resolve(s);
  const auto parts = mvgib::parse_parts(info.metadata.count("parts") ? info.metadata.at("parts") : "");
  const auto data = mvgib::load_dataset(c);
  const auto views = mvgib::prepare_views(c, data.graphs);
  if (views.front().view1.feature_dim() != info.model.feature_dim) {
    std::cerr << "error: dataset feature dimension " << views.front().view1.feature_dim()
              << " does not match checkpoint (" << info.model.feature_dim << ")" << std::endl;
    return kExitConfig;
  }
  const mvgib::Matrix emb = mvgib::extract_representations(model, views, parts);
  const auto task = c.task == mvgib::EvalTask::Cluster ? mvgib::EvalTask::Cluster : mvgib::EvalTask::Classify;
  const auto report = mvgib::evaluate_embeddings(c, emb, mvgib::labels_of(views), task, mvgib::parts_string(parts));
  const auto j = mvgib::to_json(report);
  const std::filesystem::path out_dir =
      args.overrides.count("out") ? c.out : checkpoint.parent_path().empty() ? "." : checkpoint.parent_path();
  mvgib::write_text(out_dir / ("eval_" + mvgib::to_string(task) + ".json"), j.dump(2) + "\n");
  print_json(j);
  return 0;
}

int cmd_ablate(const mvgib::ExperimentConfig& c, const std::string& which) {
  const auto data = mvgib::load_dataset(c);
  const auto variants = mvgib::ablation_variants(c, mvgib::parse_ablation(which));
  mvgib::write_text(c.out / "config.ini", c.settings.serialize());
  const auto rows = mvgib::run_variants(variants, data, c.out);
  const std::string csv = mvgib::comparison_csv(rows);
  mvgib::write_text(c.out / "ablation.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_sweep(const mvgib::ExperimentConfig& c, const std::string& betas, const std::string& gammas) {
  const auto data = mvgib::load_dataset(c);
  mvgib::write_text(c.out / "config.ini", c.settings.serialize());
  const auto cells = mvgib::run_sweep(c, data, split(betas), split(gammas), c.out);
  const std::string csv = mvgib::sweep_csv(cells);
  mvgib::write_text(c.out / "sweep.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_perturb(const mvgib::ExperimentConfig& c) {
  const auto data = mvgib::load_dataset(c);
  mvgib::write_text(c.out / "config.ini", c.settings.serialize());
  const auto reports = mvgib::robustness_curve(c, data, c.perturb_rates, c.out);
  const std::string csv = mvgib::robustness_csv(reports);
  mvgib::write_text(c.out / "robustness.csv", csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiview graph information bottleneck: training and evaluation"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, ablate_args, sweep_args, perturb_args;
  auto* train = app.add_subcommand("train", "train a model and write checkpoint, metrics and config snapshot");
  train_args.attach(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (classify or cluster)");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file written by train")->required();
  eval_args.attach(eval);

  auto* ablate = app.add_subcommand("ablate", "run an ablation and write a comparison CSV");
  std::string which;
  ablate->add_option("--which", which, "FEAT_RECON, NO_CONSISTENCY, NO_COMPLEMENTARITY, VIEW_PAIRS or RECON_ONLY")
      ->required();
  ablate_args.attach(ablate);

  auto* sweep = app.add_subcommand("sweep", "train and evaluate a beta x gamma grid");
  std::string betas = "0.1,0.3,0.5,0.7,1", gammas = "0.1,0.3,0.5,0.7,1";
  sweep->add_option("--betas", betas, "comma-separated beta values")->capture_default_str();
  sweep->add_option("--gammas", gammas, "comma-separated gamma values")->capture_default_str();
  sweep_args.attach(sweep);

  auto* perturb = app.add_subcommand("perturb", "edge-perturbation robustness curve");
  perturb_args.attach(perturb);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args.resolve());
    if (*eval) return cmd_eval(checkpoint, eval_args, eval_args.overrides.count("task") > 0);
    if (*ablate) return cmd_ablate(ablate_args.resolve(), which);
    if (*sweep) return cmd_sweep(sweep_args.resolve(), betas, gammas);
    if (*perturb) return cmd_perturb(perturb_args.resolve());
  } catch (const mvgib::ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitConfig;
}
