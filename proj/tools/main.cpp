// riskcast: batch pipeline for next-day risk forecasting experiments.
//
// synth      generate a synthetic cohort with a planted temporal signal
// preprocess clean a cohort (frequent periods, imputation, standardizer fit)
// window     dump the sliding-window audit files
// tune       hyper-parameter search for one family and window length
// train      fit one family on the full training windows
// evaluate   score all configured models on the shared test windows
// compare    bootstrap confidence intervals, p-values, ranked table

#include "riskcast/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_override;
  std::string family = "rnn";
  long long window_len = -1;
  long long seed_override = -1;
  std::vector<std::string> external;  // name=path
};

riskcast::ExperimentConfig effective_config(const CliOptions& opt) {
  riskcast::ExperimentConfig cfg = riskcast::load_experiment_config(opt.config_path);
  if (!opt.out_override.empty()) cfg.out_dir = opt.out_override;
  if (opt.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed_override);
  for (const auto& entry : opt.external) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == entry.size())
      throw riskcast::ConfigError("--external-scores expects NAME=PATH, got '" + entry + "'");
    cfg.external_scores[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"next-day binary outcome forecasting pipeline"};
  app.require_subcommand(1);

  CliOptions opt;

  auto add_common = [&](CLI::App* cmd, bool needs_model = false) {
    cmd->add_option("--config", opt.config_path, "experiment config JSON")->required();
    cmd->add_option("--out", opt.out_override, "override output directory");
    cmd->add_option("--seed", opt.seed_override, "override master seed");
    cmd->add_option("--external-scores", opt.external,
                    "external model scores as NAME=PATH (repeatable)");
    if (needs_model) {
      cmd->add_option("--family", opt.family, "model family: rnn | logistic | ffnn")
          ->required();
      cmd->add_option("--window-len,-n", opt.window_len, "input window length")->required();
    }
    return cmd;
  };

  auto* c_synth = add_common(app.add_subcommand("synth", "generate a synthetic cohort"));
  auto* c_prep = add_common(app.add_subcommand("preprocess", "clean and standardize"));
  auto* c_window = add_common(app.add_subcommand("window", "dump sliding windows"));
  auto* c_tune = add_common(app.add_subcommand("tune", "hyper-parameter search"), true);
  auto* c_train = add_common(app.add_subcommand("train", "train on full training set"), true);
  auto* c_eval = add_common(app.add_subcommand("evaluate", "score the test windows"));
  auto* c_comp = add_common(app.add_subcommand("compare", "bootstrap comparison report"));

  CLI11_PARSE(app, argc, argv);

  try {
    const riskcast::ExperimentConfig cfg = effective_config(opt);
    if (c_synth->parsed()) {
      riskcast::run_synth(cfg);
      std::cout << "wrote " << riskcast::data_dir(cfg) << "\n";
    } else if (c_prep->parsed()) {
      riskcast::run_preprocess(cfg);
      std::cout << "wrote " << riskcast::clean_dir(cfg) << "\n";
    } else if (c_window->parsed()) {
      riskcast::run_window(cfg);
      std::cout << "wrote " << riskcast::windows_dir(cfg) << "\n";
    } else if (c_tune->parsed()) {
      riskcast::run_tune(cfg, riskcast::family_from_string(opt.family),
                         static_cast<riskcast::Index>(opt.window_len));
      std::cout << "wrote " << riskcast::tune_dir(cfg) << "\n";
    } else if (c_train->parsed()) {
      riskcast::run_train(cfg, riskcast::family_from_string(opt.family),
                          static_cast<riskcast::Index>(opt.window_len));
      std::cout << "wrote " << riskcast::models_dir(cfg) << "\n";
    } else if (c_eval->parsed()) {
      riskcast::run_evaluate(cfg);
      std::cout << "wrote " << riskcast::eval_dir(cfg) << "\n";
    } else if (c_comp->parsed()) {
      riskcast::run_compare(cfg);
      std::cout << "wrote " << riskcast::report_dir(cfg) << "\n";
    }
  } catch (const riskcast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const riskcast::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
