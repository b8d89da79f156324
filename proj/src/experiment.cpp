#include "riskcast/experiment.hpp"

#include "riskcast/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace riskcast {

namespace fs = std::filesystem;
using nlohmann::json;

Family family_from_string(const std::string& s) {
  if (s == "rnn") return Family::rnn;
  if (s == "logistic") return Family::logistic;
  if (s == "ffnn") return Family::ffnn;
  throw ConfigError("unknown model family '" + s + "' (implemented: rnn, logistic, ffnn)");
}

const char* to_string(Family f) {
  switch (f) {
    case Family::rnn: return "rnn";
    case Family::logistic: return "logistic";
    case Family::ffnn: return "ffnn";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("out_dir must be set");
  if (window_lengths.empty()) throw ConfigError("window_lengths must not be empty");
  for (Index n : window_lengths)
    if (n < 1) throw ConfigError("window lengths must be >= 1");
  if (families.empty()) throw ConfigError("at least one model family required");
  if (test_fraction <= 0 || test_fraction >= 1)
    throw ConfigError("test_fraction must be in (0,1)");
  if (tune_iterations < 1) throw ConfigError("tune_iterations must be >= 1");
  if (cv_folds < 1) throw ConfigError("cv_folds must be >= 1");
  if (bootstrap.n_resamples < 1) throw ConfigError("bootstrap resamples must be >= 1");
  if (bootstrap.block_len < 1) throw ConfigError("bootstrap block length must be >= 1");
  periods.validate();
  synth.validate();
  for (const auto& [name, space] : search_spaces) {
    family_from_string(name);
    space.validate();
  }
  std::set<std::string> names;
  for (const auto& spec : psychometrics) {
    if (spec.name.empty()) throw ConfigError("psychometric instrument without a name");
    if (!names.insert(spec.name).second)
      throw ConfigError("duplicate psychometric name '" + spec.name + "'");
  }
  for (const auto& [name, path] : external_scores) {
    if (name.empty() || path.empty())
      throw ConfigError("external score entries need a name and a path");
    if (!names.insert(name).second)
      throw ConfigError("duplicate external score name '" + name + "'");
  }
}

FamilyDefaults ExperimentConfig::defaults_for(Family f) const {
  const auto it = family_defaults.find(to_string(f));
  if (it != family_defaults.end()) return it->second;
  FamilyDefaults d;
  if (f == Family::logistic) {
    d.layers = 0;
    d.dropout = 0.0;
    d.learning_rate = 1e-2;
    d.epochs = 50;
  }
  return d;
}

SearchSpace ExperimentConfig::space_for(Family f) const {
  const auto it = search_spaces.find(to_string(f));
  if (it != search_spaces.end()) return it->second;
  switch (f) {
    case Family::rnn: return SearchSpace::recurrent_default();
    case Family::logistic: return SearchSpace::logistic_default();
    case Family::ffnn: return SearchSpace::ffnn_default();
  }
  throw ConfigError("no search space");
}

LossWeightMode ExperimentConfig::weight_mode_for(Family f) const {
  // benchmarks keep the unweighted loss except the feed-forward net
  if (f == Family::logistic) return LossWeightMode::unweighted;
  return loss_weight_mode;
}

namespace {

json search_space_to_json(const SearchSpace& space) {
  json dims = json::array();
  for (const auto& d : space.dims) {
    const char* type = d.type == SearchDim::Type::integer
                           ? "integer"
                           : d.type == SearchDim::Type::real ? "real" : "log_real";
    dims.push_back(json{{"name", d.name}, {"type", type}, {"lo", d.lo}, {"hi", d.hi}});
  }
  return dims;
}

SearchSpace search_space_from_json(const json& j) {
  SearchSpace space;
  for (const auto& dj : j) {
    SearchDim d;
    d.name = dj.at("name").get<std::string>();
    const std::string type = dj.at("type").get<std::string>();
    if (type == "integer")
      d.type = SearchDim::Type::integer;
    else if (type == "real")
      d.type = SearchDim::Type::real;
    else if (type == "log_real")
      d.type = SearchDim::Type::log_real;
    else
      throw ConfigError("unknown search dimension type '" + type + "'");
    d.lo = dj.at("lo").get<double>();
    d.hi = dj.at("hi").get<double>();
    space.dims.push_back(std::move(d));
  }
  return space;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["events_path"] = c.events_path;
  j["statics_path"] = c.statics_path;
  j["schema_path"] = c.schema_path;
  j["oracle_path"] = c.oracle_path;
  j["out_dir"] = c.out_dir;
  j["synth"] = {{"n_patients", c.synth.n_patients},
                {"length_mean", c.synth.length_mean},
                {"length_sd", c.synth.length_sd},
                {"length_min", c.synth.length_min},
                {"length_max", c.synth.length_max},
                {"n_binary_components", c.synth.n_binary_components},
                {"n_ordinal_components", c.synth.n_ordinal_components},
                {"n_continuous_views", c.synth.n_continuous_views},
                {"n_distractors", c.synth.n_distractors},
                {"n_static", c.synth.n_static},
                {"base_logit", c.synth.base_logit},
                {"state_weight", c.synth.state_weight},
                {"self_excitation", c.synth.self_excitation},
                {"excitation_window", c.synth.excitation_window},
                {"static_weight", c.synth.static_weight},
                {"season_amplitude", c.synth.season_amplitude},
                {"season_period", c.synth.season_period},
                {"drift", c.synth.drift},
                {"ar_coef", c.synth.ar_coef},
                {"state_noise_sd", c.synth.state_noise_sd},
                {"view_noise_sd", c.synth.view_noise_sd},
                {"missing_dynamic_rate", c.synth.missing_dynamic_rate},
                {"missing_event_patient_rate", c.synth.missing_event_patient_rate},
                {"day_skip_rate", c.synth.day_skip_rate},
                {"seed", c.synth.seed}};
  j["periods"] = {{"min_len_days", c.periods.min_len_days},
                  {"boundary_daily_run", c.periods.boundary_daily_run},
                  {"max_mean_gap", c.periods.max_mean_gap}};
  j["test_fraction"] = c.test_fraction;
  j["window_lengths"] = c.window_lengths;
  json fams = json::array();
  for (Family f : c.families) fams.push_back(to_string(f));
  j["families"] = fams;
  j["loss_weight_mode"] = to_string(c.loss_weight_mode);
  json defaults = json::object();
  for (const auto& [name, d] : c.family_defaults)
    defaults[name] = {{"hidden", d.hidden},       {"layers", d.layers},
                      {"dropout", d.dropout},     {"l2", d.l2},
                      {"epochs", d.epochs},       {"learning_rate", d.learning_rate},
                      {"batch_size", d.batch_size}};
  j["family_defaults"] = defaults;
  j["tune_iterations"] = c.tune_iterations;
  j["tune_strategy"] = to_string(c.tune_strategy);
  j["tune_warmup"] = c.tune_warmup;
  j["cv_folds"] = c.cv_folds;
  json spaces = json::object();
  for (const auto& [name, space] : c.search_spaces) spaces[name] = search_space_to_json(space);
  j["search_spaces"] = spaces;
  j["bootstrap"] = {{"n_resamples", c.bootstrap.n_resamples},
                    {"block_len", c.bootstrap.block_len},
                    {"seed", c.bootstrap.seed}};
  json psychs = json::array();
  for (const auto& spec : c.psychometrics)
    psychs.push_back(json{{"name", spec.name},
                          {"components", spec.components},
                          {"min_total", spec.min_total},
                          {"max_total", spec.max_total}});
  j["psychometrics"] = psychs;
  j["external_scores"] = c.external_scores;
  j["seed"] = c.seed;
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  maybe(j, "events_path", c.events_path);
  maybe(j, "statics_path", c.statics_path);
  maybe(j, "schema_path", c.schema_path);
  maybe(j, "oracle_path", c.oracle_path);
  maybe(j, "out_dir", c.out_dir);
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    maybe(s, "n_patients", c.synth.n_patients);
    maybe(s, "length_mean", c.synth.length_mean);
    maybe(s, "length_sd", c.synth.length_sd);
    maybe(s, "length_min", c.synth.length_min);
    maybe(s, "length_max", c.synth.length_max);
    maybe(s, "n_binary_components", c.synth.n_binary_components);
    maybe(s, "n_ordinal_components", c.synth.n_ordinal_components);
    maybe(s, "n_continuous_views", c.synth.n_continuous_views);
    maybe(s, "n_distractors", c.synth.n_distractors);
    maybe(s, "n_static", c.synth.n_static);
    maybe(s, "base_logit", c.synth.base_logit);
    maybe(s, "state_weight", c.synth.state_weight);
    maybe(s, "self_excitation", c.synth.self_excitation);
    maybe(s, "excitation_window", c.synth.excitation_window);
    maybe(s, "static_weight", c.synth.static_weight);
    maybe(s, "season_amplitude", c.synth.season_amplitude);
    maybe(s, "season_period", c.synth.season_period);
    maybe(s, "drift", c.synth.drift);
    maybe(s, "ar_coef", c.synth.ar_coef);
    maybe(s, "state_noise_sd", c.synth.state_noise_sd);
    maybe(s, "view_noise_sd", c.synth.view_noise_sd);
    maybe(s, "missing_dynamic_rate", c.synth.missing_dynamic_rate);
    maybe(s, "missing_event_patient_rate", c.synth.missing_event_patient_rate);
    maybe(s, "day_skip_rate", c.synth.day_skip_rate);
    maybe(s, "seed", c.synth.seed);
  }
  if (j.contains("periods")) {
    const auto& p = j.at("periods");
    maybe(p, "min_len_days", c.periods.min_len_days);
    maybe(p, "boundary_daily_run", c.periods.boundary_daily_run);
    maybe(p, "max_mean_gap", c.periods.max_mean_gap);
  }
  maybe(j, "test_fraction", c.test_fraction);
  if (j.contains("window_lengths"))
    c.window_lengths = j.at("window_lengths").get<std::vector<Index>>();
  if (j.contains("families")) {
    c.families.clear();
    for (const auto& f : j.at("families"))
      c.families.push_back(family_from_string(f.get<std::string>()));
  }
  if (j.contains("loss_weight_mode"))
    c.loss_weight_mode = loss_weight_mode_from_string(j.at("loss_weight_mode").get<std::string>());
  if (j.contains("family_defaults")) {
    for (const auto& [name, dj] : j.at("family_defaults").items()) {
      family_from_string(name);
      FamilyDefaults d;
      maybe(dj, "hidden", d.hidden);
      maybe(dj, "layers", d.layers);
      maybe(dj, "dropout", d.dropout);
      maybe(dj, "l2", d.l2);
      maybe(dj, "epochs", d.epochs);
      maybe(dj, "learning_rate", d.learning_rate);
      maybe(dj, "batch_size", d.batch_size);
      c.family_defaults[name] = d;
    }
  }
  maybe(j, "tune_iterations", c.tune_iterations);
  if (j.contains("tune_strategy"))
    c.tune_strategy = search_strategy_from_string(j.at("tune_strategy").get<std::string>());
  maybe(j, "tune_warmup", c.tune_warmup);
  maybe(j, "cv_folds", c.cv_folds);
  if (j.contains("search_spaces"))
    for (const auto& [name, sj] : j.at("search_spaces").items())
      c.search_spaces[name] = search_space_from_json(sj);
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    maybe(b, "n_resamples", c.bootstrap.n_resamples);
    maybe(b, "block_len", c.bootstrap.block_len);
    maybe(b, "seed", c.bootstrap.seed);
  }
  if (j.contains("psychometrics")) {
    for (const auto& pj : j.at("psychometrics")) {
      PsychometricSpec spec;
      spec.name = pj.at("name").get<std::string>();
      spec.components = pj.at("components").get<std::vector<std::string>>();
      maybe(pj, "min_total", spec.min_total);
      maybe(pj, "max_total", spec.max_total);
      c.psychometrics.push_back(std::move(spec));
    }
  }
  if (j.contains("external_scores"))
    c.external_scores = j.at("external_scores").get<std::map<std::string, std::string>>();
  maybe(j, "seed", c.seed);
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& context) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + context + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config structure error in " + context + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text, path);
}

std::string experiment_config_json(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 14695981039346656037ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

}  // namespace

std::string experiment_config_hash(const ExperimentConfig& config) {
  const std::string dump = config_to_json(config).dump();
  return hex64(fnv1a(dump.data(), dump.size()));
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("missing artifact: " + path);
  char buf[1 << 16];
  std::uint64_t h = 14695981039346656037ULL;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

std::string data_dir(const ExperimentConfig& c) { return c.out_dir + "/data"; }
std::string clean_dir(const ExperimentConfig& c) { return c.out_dir + "/clean"; }
std::string windows_dir(const ExperimentConfig& c) { return c.out_dir + "/windows"; }
std::string tune_dir(const ExperimentConfig& c) { return c.out_dir + "/tune"; }
std::string models_dir(const ExperimentConfig& c) { return c.out_dir + "/models"; }
std::string eval_dir(const ExperimentConfig& c) { return c.out_dir + "/eval"; }
std::string report_dir(const ExperimentConfig& c) { return c.out_dir + "/report"; }

namespace {

void write_run_meta(const std::string& stage_dir) {
  // wall-clock provenance lives apart from the deterministic payloads
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
  json j{{"version", kVersion}, {"unix_time", secs.count()}};
  std::ofstream out(stage_dir + "/run_meta.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

std::string manifest_path(const std::string& stage_dir, const std::string& stage) {
  return stage_dir + "/manifest_" + stage + ".json";
}

}  // namespace

void write_stage_manifest(const std::string& stage_dir, const std::string& stage,
                          const ExperimentConfig& config,
                          const std::vector<std::string>& outputs) {
  json files = json::object();
  for (const auto& name : outputs) files[name] = file_hash_hex(stage_dir + "/" + name);
  json j{{"stage", stage},
         {"version", kVersion},
         {"config_hash", experiment_config_hash(config)},
         {"seed", config.seed},
         {"files", files}};
  std::ofstream out(manifest_path(stage_dir, stage), std::ios::binary);
  if (!out) throw DataError("cannot write manifest in " + stage_dir);
  out << j.dump(2) << '\n';
  write_run_meta(stage_dir);
}

void verify_stage_manifest(const std::string& stage_dir, const std::string& stage,
                           const ExperimentConfig& config) {
  const std::string path = manifest_path(stage_dir, stage);
  std::ifstream in(path);
  if (!in)
    throw MissingArtifact("stage '" + stage + "' has not been run (missing " + path + ")");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error in " + path + ": " + e.what());
  }
  const std::string expect = experiment_config_hash(config);
  const std::string got = j.value("config_hash", "");
  if (got != expect)
    throw HashMismatch("stage '" + stage + "' was produced with a different config (hash " +
                       got + ", current " + expect + "); re-run the pipeline");
  for (const auto& [name, hash] : j.at("files").items()) {
    const std::string file = stage_dir + "/" + name;
    const std::string current = file_hash_hex(file);
    if (current != hash.get<std::string>())
      throw HashMismatch("artifact " + file + " changed since stage '" + stage +
                         "' produced it");
  }
}

namespace {

struct InputPaths {
  std::string events, statics, schema, oracle;
  bool synthetic = false;
};

InputPaths resolve_inputs(const ExperimentConfig& c) {
  InputPaths p;
  if (c.events_path.empty() && c.statics_path.empty() && c.schema_path.empty()) {
    p.synthetic = true;
    p.events = data_dir(c) + "/events.csv";
    p.statics = data_dir(c) + "/statics.csv";
    p.schema = data_dir(c) + "/schema.json";
    p.oracle = data_dir(c) + "/oracle.csv";
    return p;
  }
  if (c.events_path.empty() || c.statics_path.empty() || c.schema_path.empty())
    throw ConfigError("events_path, statics_path and schema_path must be set together "
                      "(leave all empty to use the synthetic generator)");
  p.events = c.events_path;
  p.statics = c.statics_path;
  p.schema = c.schema_path;
  p.oracle = c.oracle_path;
  return p;
}

std::uint64_t stream_for(const std::string& label) {
  return fnv1a(label.data(), label.size());
}

}  // namespace

void run_synth(const ExperimentConfig& config) {
  config.validate();
  const InputPaths paths = resolve_inputs(config);
  if (!paths.synthetic)
    throw ConfigError("synth command needs empty events/statics/schema paths "
                      "(explicit input files are configured)");
  fs::create_directories(data_dir(config));
  const SynthResult result = generate_cohort(config.synth);
  save_cohort(result.cohort, paths.events, paths.statics);
  save_schema(result.cohort.schema, paths.schema);
  save_oracle(result.oracle, paths.oracle);
  write_stage_manifest(data_dir(config), "data", config,
                       {"events.csv", "statics.csv", "schema.json", "oracle.csv"});
}

void run_preprocess(const ExperimentConfig& config) {
  config.validate();
  const InputPaths paths = resolve_inputs(config);
  if (paths.synthetic) verify_stage_manifest(data_dir(config), "data", config);

  const FeatureSchema schema = load_schema(paths.schema);
  const Cohort cohort = load_cohort(paths.events, paths.statics, schema);
  const CleanResult result = clean_cohort(cohort, config.periods);
  if (result.cleaned.patients.empty())
    throw DataError("no series with a qualifying frequent-assessment period");
  const StandardizationStats stats = fit_standardizer(result.cleaned, config.test_fraction);

  const std::string dir = clean_dir(config);
  fs::create_directories(dir);
  save_cohort(result.cleaned, dir + "/events.csv", dir + "/statics.csv");
  save_schema(result.cleaned.schema, dir + "/schema.json");
  save_stats(stats, dir + "/stats.json");

  csv::Table validation;
  validation.header = {"patient_id", "flag", "detail"};
  for (const auto& e : result.validation.entries)
    validation.rows.push_back({e.patient_id, to_string(e.flag), e.detail});
  csv::write_file(dir + "/validation.csv", validation);

  write_stage_manifest(dir, "clean", config,
                       {"events.csv", "statics.csv", "schema.json", "stats.json",
                        "validation.csv"});
}

PreparedData load_prepared(const ExperimentConfig& config) {
  const std::string dir = clean_dir(config);
  verify_stage_manifest(dir, "clean", config);
  PreparedData data;
  const FeatureSchema schema = load_schema(dir + "/schema.json");
  data.cleaned = load_cohort(dir + "/events.csv", dir + "/statics.csv", schema);
  data.stats = load_stats(dir + "/stats.json");
  data.store = build_series(data.cleaned, data.stats);
  return data;
}

void run_window(const ExperimentConfig& config) {
  config.validate();
  const PreparedData data = load_prepared(config);
  const std::string dir = windows_dir(config);
  fs::create_directories(dir);
  std::vector<std::string> outputs;
  for (Index n : config.window_lengths) {
    const WindowDataset ds(data.store, n);
    split_train_test(ds, config.test_fraction);  // validates InsufficientHistory early
    const std::string name = "windows_n" + std::to_string(n) + ".csv";
    save_window_dump(ds, ds.windows(), dir + "/" + name);
    outputs.push_back(name);
  }
  write_stage_manifest(dir, "windows", config, outputs);
}

std::string model_label(Family family, Index n) {
  return std::string(to_string(family)) + "_n" + std::to_string(n);
}

std::string checkpoint_path(const ExperimentConfig& config, Family family, Index n) {
  return models_dir(config) + "/" + model_label(family, n) + ".json";
}

std::string best_config_path(const ExperimentConfig& config, Family family, Index n) {
  return tune_dir(config) + "/" + model_label(family, n) + "_best.json";
}

namespace {

ModelConfig rnn_config_from(const ConfigMap& params, const FamilyDefaults& d, Index input_dim,
                            std::uint64_t seed) {
  auto get = [&](const char* key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = static_cast<Index>(get("hidden", double(d.hidden)));
  cfg.layers = static_cast<int>(get("layers", double(std::max(d.layers, 1))));
  cfg.dropout = get("dropout", d.dropout);
  cfg.l2 = get("l2", d.l2);
  cfg.epochs = static_cast<int>(get("epochs", double(d.epochs)));
  cfg.batch_size = d.batch_size;
  cfg.learning_rate = get("lr", d.learning_rate);
  cfg.seed = seed;
  return cfg;
}

FfnnConfig ffnn_config_from(const ConfigMap& params, const FamilyDefaults& d,
                            std::uint64_t seed) {
  auto get = [&](const char* key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  FfnnConfig cfg;
  const int layers = static_cast<int>(get("layers", double(std::max(d.layers, 1))));
  const Index hidden = static_cast<Index>(get("hidden", double(d.hidden)));
  cfg.hidden_sizes.assign(layers, hidden);
  cfg.dropout = get("dropout", d.dropout);
  cfg.l2 = get("l2", d.l2);
  cfg.epochs = static_cast<int>(get("epochs", double(d.epochs)));
  cfg.batch_size = d.batch_size;
  cfg.learning_rate = get("lr", d.learning_rate);
  cfg.seed = seed;
  return cfg;
}

std::vector<double> labels_of(const WindowDataset& ds, std::span<const WindowRef> refs) {
  std::vector<double> out;
  out.reserve(refs.size());
  for (const auto& ref : refs) out.push_back(ds.label(ref));
  return out;
}

}  // namespace

Vector train_and_score(const ExperimentConfig& config, Family family, const WindowDataset& ds,
                       std::span<const WindowRef> train_refs,
                       std::span<const WindowRef> score_refs, const ConfigMap& params,
                       std::uint64_t seed, TrainedModel* out_model, FfnnModel* out_ffnn,
                       LogisticModel* out_logistic) {
  const FamilyDefaults defaults = config.defaults_for(family);
  const std::vector<double> train_labels = labels_of(ds, train_refs);
  const LossWeights weights =
      compute_loss_weights(train_labels, config.weight_mode_for(family));

  switch (family) {
    case Family::rnn: {
      const ModelConfig cfg = rnn_config_from(params, defaults, ds.input_dim(), seed);
      TrainedModel model = train(ds, train_refs, cfg, weights);
      Vector scores = score_refs.empty() ? Vector() : predict(model, ds, score_refs);
      if (out_model) *out_model = std::move(model);
      return scores;
    }
    case Family::ffnn: {
      const FfnnConfig cfg = ffnn_config_from(params, defaults, seed);
      const FlatDataset flat_train = flatten_all(ds, train_refs);
      FfnnModel model = train_ffnn(flat_train, cfg, weights);
      Vector scores =
          score_refs.empty() ? Vector() : ffnn_predict(model, flatten_all(ds, score_refs).x);
      if (out_ffnn) *out_ffnn = std::move(model);
      return scores;
    }
    case Family::logistic: {
      auto get = [&](const char* key, double fallback) {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
      };
      const FlatDataset flat_train = flatten_all(ds, train_refs);
      LogisticModel model = train_logistic(
          flat_train, get("l2", defaults.l2), static_cast<int>(get("epochs", defaults.epochs)),
          get("lr", defaults.learning_rate), seed, weights, defaults.batch_size);
      Vector scores =
          score_refs.empty() ? Vector() : model.score(flatten_all(ds, score_refs).x);
      if (out_logistic) *out_logistic = std::move(model);
      return scores;
    }
  }
  throw ConfigError("unhandled family");
}

void run_tune(const ExperimentConfig& config, Family family, Index n) {
  config.validate();
  const PreparedData data = load_prepared(config);
  const WindowDataset ds(data.store, n);
  const SplitWindows split = split_train_test(ds, config.test_fraction);
  const CvFolds folds = build_cv_folds(ds, split.train, config.cv_folds);
  if (folds.folds.empty() || folds.folds[0].train.empty())
    throw DataError("cross-validation folds are empty");

  const FoldEvaluator evaluate = [&](const ConfigMap& params, const CvFold& fold,
                                     std::uint64_t seed) {
    const Vector scores =
        train_and_score(config, family, ds, fold.train, fold.validation, params, seed);
    const std::vector<double> val_labels = labels_of(ds, fold.validation);
    return auc_prg(std::span<const double>(scores.data(), scores.size()), val_labels);
  };

  const std::string label = model_label(family, n);
  const std::uint64_t seed = derive_seed(config.seed, stream_for("tune:" + label));
  const SearchResult result = run_search(config.space_for(family), folds, evaluate,
                                         config.tune_iterations, seed, config.tune_strategy,
                                         config.tune_warmup);

  fs::create_directories(tune_dir(config));
  save_trial_log(config.space_for(family), result, tune_dir(config) + "/" + label + "_trials.csv");

  json best{{"config_hash", experiment_config_hash(config)},
            {"family", to_string(family)},
            {"n", n},
            {"objective", result.best().objective},
            {"fold_scores", result.best().fold_scores},
            {"seed", result.best().seed},
            {"params", result.best().params},
            {"excluded_series", folds.excluded_series}};
  std::ofstream out(best_config_path(config, family, n), std::ios::binary);
  if (!out) throw DataError("cannot write best-config file");
  out << best.dump(2) << '\n';
  write_stage_manifest(tune_dir(config), "tune_" + label, config,
                       {label + "_trials.csv", label + "_best.json"});
}

ConfigMap resolve_model_params(const ExperimentConfig& config, Family family, Index n) {
  const std::string path = best_config_path(config, family, n);
  std::ifstream in(path);
  if (!in) return {};  // defaults
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("best-config parse error in " + path + ": " + e.what());
  }
  const std::string expect = experiment_config_hash(config);
  if (j.value("config_hash", "") != expect)
    throw HashMismatch("tuned config " + path + " was produced with a different experiment "
                       "config; re-run tune or remove it");
  return j.at("params").get<ConfigMap>();
}

void run_train(const ExperimentConfig& config, Family family, Index n) {
  config.validate();
  const PreparedData data = load_prepared(config);
  const WindowDataset ds(data.store, n);
  const SplitWindows split = split_train_test(ds, config.test_fraction);
  const ConfigMap params = resolve_model_params(config, family, n);
  const std::string label = model_label(family, n);
  const std::uint64_t seed = derive_seed(config.seed, stream_for("train:" + label));

  fs::create_directories(models_dir(config));
  TrainedModel rnn_model;
  FfnnModel ffnn_model;
  LogisticModel logistic_model;
  train_and_score(config, family, ds, split.train, std::span<const WindowRef>{}, params, seed,
                  &rnn_model, &ffnn_model, &logistic_model);

  const std::string path = checkpoint_path(config, family, n);
  std::vector<std::string> outputs{label + ".json"};
  switch (family) {
    case Family::rnn:
      save_model(rnn_model, path);
      save_loss_trace(rnn_model, models_dir(config) + "/" + label + "_loss.csv");
      outputs.push_back(label + "_loss.csv");
      break;
    case Family::ffnn:
      save_ffnn(ffnn_model, path);
      break;
    case Family::logistic:
      save_logistic(logistic_model, path);
      break;
  }
  write_stage_manifest(models_dir(config), "train_" + label, config, outputs);
}

namespace {

// canonical test rows: the first window length's test refs; other lengths'
// scores are aligned by (series, label position)
struct CanonicalTest {
  std::vector<WindowRef> refs;  // into ds of window_lengths[0]
  std::map<std::pair<Index, Index>, Index> row_of;  // (series, label_pos) -> row
};

CanonicalTest canonical_test(const WindowDataset& ds, const SplitWindows& split) {
  CanonicalTest ct;
  ct.refs = split.test;
  for (Index r = 0; r < static_cast<Index>(ct.refs.size()); ++r) {
    const auto key = std::make_pair(ct.refs[r].series, ds.label_pos(ct.refs[r]));
    if (!ct.row_of.emplace(key, r).second)
      throw DataError("duplicate test label key; series windows are inconsistent");
  }
  return ct;
}

Vector align_scores(const WindowDataset& ds_n, const SplitWindows& split_n,
                    const Vector& scores, const CanonicalTest& ct) {
  if (scores.size() != static_cast<Index>(split_n.test.size()))
    throw AlignmentError("score count does not match test window count");
  Vector out(scores.size());
  for (Index j = 0; j < scores.size(); ++j) {
    const auto& ref = split_n.test[j];
    const auto key = std::make_pair(ref.series, ds_n.label_pos(ref));
    const auto it = ct.row_of.find(key);
    if (it == ct.row_of.end())
      throw AlignmentError("test label sets differ across window lengths");
    out[it->second] = scores[j];
  }
  return out;
}

}  // namespace

void run_evaluate(const ExperimentConfig& config) {
  config.validate();
  const PreparedData data = load_prepared(config);

  const Index n0 = config.window_lengths.front();
  const WindowDataset ds0(data.store, n0);
  const SplitWindows split0 = split_train_test(ds0, config.test_fraction);
  const CanonicalTest ct = canonical_test(ds0, split0);

  ScoredTestSet testset;
  for (const auto& ref : ct.refs) {
    const auto& s = ds0.series()[ref.series];
    testset.series_id.push_back(s.series_id);
    testset.patient_id.push_back(s.patient_id);
    testset.label_index.push_back(ds0.label_pos(ref) + 1);
    testset.label_day.push_back(ds0.label_day(ref));
    testset.labels.push_back(ds0.label(ref));
  }
  testset.scores.resize(testset.rows(), 0);

  for (Family family : config.families) {
    for (Index n : config.window_lengths) {
      const std::string label = model_label(family, n);
      verify_stage_manifest(models_dir(config), "train_" + label, config);
      const WindowDataset ds(data.store, n);
      const SplitWindows split = split_train_test(ds, config.test_fraction);
      Vector scores;
      switch (family) {
        case Family::rnn: {
          const TrainedModel model = load_model(checkpoint_path(config, family, n));
          scores = predict(model, ds, split.test);
          break;
        }
        case Family::ffnn: {
          const FfnnModel model = load_ffnn(checkpoint_path(config, family, n));
          scores = ffnn_predict(model, flatten_all(ds, split.test).x);
          break;
        }
        case Family::logistic: {
          const LogisticModel model = load_logistic(checkpoint_path(config, family, n));
          scores = model.score(flatten_all(ds, split.test).x);
          break;
        }
      }
      testset.add_model(label, align_scores(ds, split, scores, ct));
    }
  }

  // instrument scores depend only on the day before the label, so any window
  // length gives the same column
  for (const auto& spec : config.psychometrics)
    testset.add_model(spec.name, psychometric_scores(ds0, ct.refs, spec));

  const InputPaths paths = resolve_inputs(config);
  if (!paths.oracle.empty() && fs::exists(paths.oracle)) {
    const OracleProbs oracle = load_oracle(paths.oracle);
    testset.add_model("bayes_oracle", bayes_scores(ds0, ct.refs, oracle));
  }

  for (const auto& [name, path] : config.external_scores)
    testset.add_model(name, load_external_scores(path, ds0, ct.refs));

  const std::string dir = eval_dir(config);
  fs::create_directories(dir);
  csv::Table t;
  t.header = {"series_id", "patient_id", "label_index", "label_date", "label"};
  for (const auto& name : testset.model_names) t.header.push_back(name);
  for (Index r = 0; r < testset.rows(); ++r) {
    std::vector<std::string> row{testset.series_id[r], testset.patient_id[r],
                                 std::to_string(testset.label_index[r]),
                                 format_iso_date(testset.label_day[r]),
                                 csv::fmt(testset.labels[r])};
    for (Index m = 0; m < testset.models(); ++m) row.push_back(csv::fmt(testset.scores(r, m)));
    t.rows.push_back(std::move(row));
  }
  csv::write_file(dir + "/scored_test.csv", t);

  std::vector<std::pair<std::string, PRGCurve>> curves;
  for (Index m = 0; m < testset.models(); ++m) {
    const Vector col = testset.scores.col(m);
    curves.emplace_back(testset.model_names[m],
                        prg_curve(std::span<const double>(col.data(), col.size()),
                                  testset.labels));
  }
  save_prg_csv(curves, dir + "/prg_curves.csv");
  write_stage_manifest(dir, "eval", config, {"scored_test.csv", "prg_curves.csv"});
}

namespace {

ScoredTestSet load_scored_test(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  if (t.header.size() < 6 || t.header[0] != "series_id")
    throw DataError("unexpected scored test header in " + path);
  ScoredTestSet ts;
  for (std::size_t m = 5; m < t.header.size(); ++m) ts.model_names.push_back(t.header[m]);
  const Index n_models = static_cast<Index>(ts.model_names.size());
  ts.scores.resize(static_cast<Index>(t.rows.size()), n_models);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string context = path + " row " + std::to_string(r + 2);
    ts.series_id.push_back(row[0]);
    ts.patient_id.push_back(row[1]);
    ts.label_index.push_back(static_cast<Index>(csv::parse_double(row[2], context)));
    ts.label_day.push_back(parse_iso_date(row[3]));
    ts.labels.push_back(csv::parse_double(row[4], context));
    for (Index m = 0; m < n_models; ++m)
      ts.scores(static_cast<Index>(r), m) = csv::parse_double(row[5 + m], context);
  }
  return ts;
}

}  // namespace

void run_compare(const ExperimentConfig& config) {
  config.validate();
  verify_stage_manifest(eval_dir(config), "eval", config);
  const ScoredTestSet testset = load_scored_test(eval_dir(config) + "/scored_test.csv");

  const BootstrapReport report = block_bootstrap(testset, config.bootstrap.n_resamples,
                                                 config.bootstrap.block_len,
                                                 config.bootstrap.seed);
  const std::vector<ComparisonRow> rows = comparison_table(report);

  const std::string dir = report_dir(config);
  fs::create_directories(dir);
  save_comparison_csv(rows, dir + "/comparison.csv");

  json j;
  j["version"] = kVersion;
  j["config_hash"] = experiment_config_hash(config);
  j["seed"] = config.seed;
  j["bootstrap"] = {{"n_resamples", report.n_resamples},
                    {"block_len", report.block_len},
                    {"seed", report.seed},
                    {"degenerate_redraws", report.degenerate_redraws},
                    {"ci_method", "percentile"},
                    {"stratification", "patient"},
                    {"ks_note", "normal parameters estimated from each resample vector "
                                "(Lilliefors-style approximation)"}};
  j["prevalence"] = testset.prevalence();
  json models = json::object();
  for (const auto& mb : report.models) {
    const Index col = testset.model_column(mb.name);
    const Vector scores = testset.scores.col(col);
    models[mb.name] = {
        {"auc_prg", mb.point_auc},
        {"roc_auc",
         roc_auc(std::span<const double>(scores.data(), scores.size()), testset.labels)},
        {"ci95", {mb.ci_lo, mb.ci_hi}},
        {"ci_contains_point", mb.ci_contains_point},
        {"ks_stat", mb.ks_stat},
        {"ks_p", mb.ks_p},
        {"resamples", mb.resamples}};
  }
  j["models"] = models;
  json pmat = json::object();
  for (Index a = 0; a < static_cast<Index>(report.models.size()); ++a) {
    json row = json::object();
    for (Index b = 0; b < static_cast<Index>(report.models.size()); ++b)
      row[report.models[b].name] = report.p_values(a, b);
    pmat[report.models[a].name] = row;
  }
  j["p_values"] = pmat;
  json table = json::array();
  for (const auto& row : rows)
    table.push_back(json{{"model", row.name},
                         {"auc_prg", row.auc},
                         {"ci95", {row.ci_lo, row.ci_hi}},
                         {"diff_vs_top", row.diff_vs_top},
                         {"p_vs_top", row.p_vs_top}});
  j["table"] = table;

  std::ofstream out(dir + "/report.json", std::ios::binary);
  if (!out) throw DataError("cannot write report");
  out << j.dump(2) << '\n';
  write_stage_manifest(dir, "report", config, {"comparison.csv", "report.json"});
}

}  // namespace riskcast
