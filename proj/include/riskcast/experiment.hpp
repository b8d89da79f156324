#pragma once

#include "riskcast/baselines.hpp"
#include "riskcast/cohort.hpp"
#include "riskcast/evaluation.hpp"
#include "riskcast/model.hpp"
#include "riskcast/preprocess.hpp"
#include "riskcast/synthgen.hpp"
#include "riskcast/tuning.hpp"
#include "riskcast/types.hpp"
#include "riskcast/windowing.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace riskcast {

inline constexpr const char* kVersion = "0.2.0";

struct MissingArtifact : DataError {
  using DataError::DataError;
};
struct HashMismatch : DataError {
  using DataError::DataError;
};

enum class Family { rnn, logistic, ffnn };
Family family_from_string(const std::string& s);
const char* to_string(Family f);

struct BootstrapConfig {
  Index n_resamples = 2000;
  Index block_len = 10;
  std::uint64_t seed = 7;
};

struct FamilyDefaults {
  // recurrent / ffnn
  Index hidden = 32;
  int layers = 1;
  double dropout = 0.2;
  double l2 = 1e-5;
  int epochs = 30;
  double learning_rate = 1e-4;
  Index batch_size = 512;
};

struct ExperimentConfig {
  // input data; cmd_synth fills these under <out_dir>/data when synthesizing
  std::string events_path;
  std::string statics_path;
  std::string schema_path;
  std::string oracle_path;  // optional: enables the reference scorer
  std::string out_dir = "out";

  SynthConfig synth;
  PeriodParams periods;
  double test_fraction = 0.2;

  std::vector<Index> window_lengths = {1, 10, 20};
  std::vector<Family> families = {Family::rnn, Family::logistic, Family::ffnn};
  LossWeightMode loss_weight_mode = LossWeightMode::inverse_frequency;
  std::map<std::string, FamilyDefaults> family_defaults;  // keyed by family name

  int tune_iterations = 100;
  SearchStrategy tune_strategy = SearchStrategy::tpe;
  int tune_warmup = 20;
  int cv_folds = 5;
  std::map<std::string, SearchSpace> search_spaces;  // per-family overrides

  BootstrapConfig bootstrap;
  std::vector<PsychometricSpec> psychometrics;
  std::map<std::string, std::string> external_scores;  // model name -> csv path

  std::uint64_t seed = 1;

  void validate() const;
  FamilyDefaults defaults_for(Family f) const;
  SearchSpace space_for(Family f) const;
  LossWeightMode weight_mode_for(Family f) const;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& context);
std::string experiment_config_json(const ExperimentConfig& config);
std::string experiment_config_hash(const ExperimentConfig& config);

// stage directories under out_dir
std::string data_dir(const ExperimentConfig& c);
std::string clean_dir(const ExperimentConfig& c);
std::string windows_dir(const ExperimentConfig& c);
std::string tune_dir(const ExperimentConfig& c);
std::string models_dir(const ExperimentConfig& c);
std::string eval_dir(const ExperimentConfig& c);
std::string report_dir(const ExperimentConfig& c);

std::string file_hash_hex(const std::string& path);

/// Records a stage's output hashes plus the config hash and seed, so
/// downstream commands can detect stale or edited artifacts.
void write_stage_manifest(const std::string& stage_dir, const std::string& stage,
                          const ExperimentConfig& config,
                          const std::vector<std::string>& outputs);

/// Verifies a producing stage: manifest present, config hash matches, every
/// listed output present with an unchanged hash.
void verify_stage_manifest(const std::string& stage_dir, const std::string& stage,
                           const ExperimentConfig& config);

// pipeline commands; they throw (ConfigError -> exit 2, DataError -> exit 3)
void run_synth(const ExperimentConfig& config);
void run_preprocess(const ExperimentConfig& config);
void run_window(const ExperimentConfig& config);
void run_tune(const ExperimentConfig& config, Family family, Index n);
void run_train(const ExperimentConfig& config, Family family, Index n);
void run_evaluate(const ExperimentConfig& config);
void run_compare(const ExperimentConfig& config);

/// Cleaned cohort + standardizer + series store, loaded and verified from the
/// preprocess stage.
struct PreparedData {
  Cohort cleaned;
  StandardizationStats stats;
  SeriesStore store;
};
PreparedData load_prepared(const ExperimentConfig& config);

std::string model_label(Family family, Index n);
std::string checkpoint_path(const ExperimentConfig& config, Family family, Index n);
std::string best_config_path(const ExperimentConfig& config, Family family, Index n);

/// Materializes a family's model configuration from tuned parameters (when
/// present) or the configured defaults.
ConfigMap resolve_model_params(const ExperimentConfig& config, Family family, Index n);

/// Trains one family on the given windows and returns test-set scores.
Vector train_and_score(const ExperimentConfig& config, Family family, const WindowDataset& ds,
                       std::span<const WindowRef> train_refs,
                       std::span<const WindowRef> score_refs, const ConfigMap& params,
                       std::uint64_t seed, TrainedModel* out_model = nullptr,
                       FfnnModel* out_ffnn = nullptr, LogisticModel* out_logistic = nullptr);

}  // namespace riskcast
