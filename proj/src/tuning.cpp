#include "riskcast/tuning.hpp"

#include "riskcast/csv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace riskcast {

namespace {
constexpr double kTpeGamma = 0.25;
constexpr int kTpeCandidates = 24;
}  // namespace

void SearchSpace::validate() const {
  if (dims.empty()) throw ConfigError("empty search space");
  for (const auto& d : dims) {
    if (d.name.empty()) throw ConfigError("search dimension without a name");
    if (!(d.lo < d.hi) && !(d.lo == d.hi))
      throw ConfigError("search dimension '" + d.name + "' has invalid bounds");
    if (d.type == SearchDim::Type::log_real && d.lo <= 0)
      throw ConfigError("log dimension '" + d.name + "' needs positive bounds");
  }
}

SearchSpace SearchSpace::recurrent_default() {
  return {{{"hidden", SearchDim::Type::integer, 10, 100},
           {"layers", SearchDim::Type::integer, 1, 4},
           {"dropout", SearchDim::Type::real, 0.10, 0.50},
           {"l2", SearchDim::Type::log_real, 1e-6, 1e-3},
           {"epochs", SearchDim::Type::integer, 10, 100}}};
}

SearchSpace SearchSpace::logistic_default() {
  return {{{"l2", SearchDim::Type::log_real, 1e-6, 1e-3},
           {"lr", SearchDim::Type::log_real, 1e-4, 1e-1},
           {"epochs", SearchDim::Type::integer, 10, 100}}};
}

SearchSpace SearchSpace::ffnn_default() {
  return {{{"hidden", SearchDim::Type::integer, 10, 100},
           {"layers", SearchDim::Type::integer, 1, 2},
           {"dropout", SearchDim::Type::real, 0.10, 0.50},
           {"l2", SearchDim::Type::log_real, 1e-6, 1e-3},
           {"epochs", SearchDim::Type::integer, 10, 100}}};
}

SearchStrategy search_strategy_from_string(const std::string& s) {
  if (s == "random") return SearchStrategy::random;
  if (s == "tpe") return SearchStrategy::tpe;
  throw ConfigError("unknown search strategy '" + s + "'");
}

const char* to_string(SearchStrategy s) {
  return s == SearchStrategy::random ? "random" : "tpe";
}

namespace {

// dimensions are searched in transformed space: log10 for log dims
double to_search(const SearchDim& d, double v) {
  return d.type == SearchDim::Type::log_real ? std::log10(v) : v;
}

double from_search(const SearchDim& d, double v) {
  double out = d.type == SearchDim::Type::log_real ? std::pow(10.0, v) : v;
  out = std::clamp(out, d.lo, d.hi);
  if (d.type == SearchDim::Type::integer) out = std::round(out);
  return out;
}

double prior_sample(const SearchDim& d, Rng& rng) {
  const double lo = to_search(d, d.lo);
  const double hi = to_search(d, d.hi);
  std::uniform_real_distribution<double> dist(lo, hi);
  return from_search(d, dist(rng));
}

struct Parzen {
  double lo, hi, sigma;
  std::vector<double> centers;

  double pdf(double x) const {
    const double k = double(centers.size());
    double p = 1.0 / (hi - lo);  // uniform prior component
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
    for (double c : centers) {
      const double z = (x - c) / sigma;
      p += norm * std::exp(-0.5 * z * z);
    }
    return p / (k + 1.0);
  }

  double sample(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, centers.size());
    const std::size_t c = pick(rng);
    if (c == centers.size()) {
      std::uniform_real_distribution<double> dist(lo, hi);
      return dist(rng);
    }
    std::normal_distribution<double> noise(centers[c], sigma);
    return std::clamp(noise(rng), lo, hi);
  }
};

Parzen make_parzen(const SearchDim& d, const std::vector<const Trial*>& set) {
  Parzen p;
  p.lo = to_search(d, d.lo);
  p.hi = to_search(d, d.hi);
  p.centers.reserve(set.size());
  for (const Trial* t : set) {
    const auto it = t->params.find(d.name);
    if (it != t->params.end()) p.centers.push_back(to_search(d, it->second));
  }
  const double range = std::max(p.hi - p.lo, 1e-12);
  p.sigma = std::max(range / 20.0, range / std::sqrt(double(p.centers.size()) + 1.0));
  return p;
}

}  // namespace

ConfigMap sample_config(const SearchSpace& space, const std::vector<Trial>& history,
                        SearchStrategy strategy, Rng& rng, int warmup) {
  space.validate();
  auto prior_draw = [&] {
    ConfigMap cfg;
    for (const auto& d : space.dims) cfg[d.name] = prior_sample(d, rng);
    return cfg;
  };

  if (strategy == SearchStrategy::random || static_cast<int>(history.size()) < warmup)
    return prior_draw();

  // good/bad split at the gamma quantile of (maximized) objectives
  std::vector<const Trial*> ok;
  for (const auto& t : history)
    if (!t.failed) ok.push_back(&t);
  if (ok.size() < 2) return prior_draw();
  std::stable_sort(ok.begin(), ok.end(),
                   [](const Trial* a, const Trial* b) { return a->objective > b->objective; });
  if (ok.front()->objective == ok.back()->objective)
    return prior_draw();  // indistinguishable history: density ratio is flat
  const std::size_t n_good =
      std::max<std::size_t>(1, std::size_t(std::ceil(kTpeGamma * double(ok.size()))));
  std::vector<const Trial*> good(ok.begin(), ok.begin() + n_good);
  std::vector<const Trial*> bad(ok.begin() + n_good, ok.end());
  if (bad.empty()) return prior_draw();

  std::vector<Parzen> good_density, bad_density;
  for (const auto& d : space.dims) {
    good_density.push_back(make_parzen(d, good));
    bad_density.push_back(make_parzen(d, bad));
  }

  ConfigMap best_cfg;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < kTpeCandidates; ++c) {
    ConfigMap cfg;
    double score = 0;
    for (std::size_t i = 0; i < space.dims.size(); ++i) {
      const auto& d = space.dims[i];
      const double value = from_search(d, good_density[i].sample(rng));
      cfg[d.name] = value;
      const double x = to_search(d, value);
      score += std::log(good_density[i].pdf(x)) - std::log(bad_density[i].pdf(x));
    }
    if (score > best_score) {
      best_score = score;
      best_cfg = std::move(cfg);
    }
  }
  return best_cfg;
}

const Trial& SearchResult::best() const {
  if (best_index < 0 || best_index >= static_cast<Index>(trials.size()))
    throw Error("search produced no successful trial");
  return trials[best_index];
}

SearchResult run_search(const SearchSpace& space, const CvFolds& folds,
                        const FoldEvaluator& evaluate, int iterations, std::uint64_t seed,
                        SearchStrategy strategy, int warmup) {
  space.validate();
  if (iterations < 1) throw ConfigError("search needs at least one iteration");
  if (folds.folds.empty()) throw ConfigError("search needs at least one fold");

  SearchResult result;
  Rng rng(seed);
  for (int t = 0; t < iterations; ++t) {
    Trial trial;
    trial.seed = derive_seed(seed, std::uint64_t(t));
    trial.params = sample_config(space, result.trials, strategy, rng, warmup);
    const auto start = std::chrono::steady_clock::now();
    try {
      for (const auto& fold : folds.folds)
        trial.fold_scores.push_back(evaluate(trial.params, fold, trial.seed));
      trial.objective =
          std::accumulate(trial.fold_scores.begin(), trial.fold_scores.end(), 0.0) /
          double(trial.fold_scores.size());
    } catch (const Error&) {
      trial.failed = true;
      trial.objective = -std::numeric_limits<double>::infinity();
    }
    trial.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trials.push_back(std::move(trial));
    const auto& done = result.trials.back();
    if (!done.failed &&
        (result.best_index < 0 || done.objective > result.trials[result.best_index].objective))
      result.best_index = static_cast<Index>(result.trials.size()) - 1;
  }
  return result;
}

void save_trial_log(const SearchSpace& space, const SearchResult& result,
                    const std::string& path) {
  csv::Table t;
  t.header = {"trial"};
  for (const auto& d : space.dims) t.header.push_back(d.name);
  std::size_t max_folds = 0;
  for (const auto& trial : result.trials)
    max_folds = std::max(max_folds, trial.fold_scores.size());
  for (std::size_t f = 0; f < max_folds; ++f)
    t.header.push_back("fold" + std::to_string(f + 1));
  t.header.push_back("mean");
  t.header.push_back("seconds");

  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    const auto& trial = result.trials[i];
    std::vector<std::string> row{std::to_string(i)};
    for (const auto& d : space.dims) {
      const auto it = trial.params.find(d.name);
      row.push_back(it == trial.params.end() ? "" : csv::fmt(it->second));
    }
    for (std::size_t f = 0; f < max_folds; ++f)
      row.push_back(f < trial.fold_scores.size() ? csv::fmt(trial.fold_scores[f]) : "");
    row.push_back(trial.failed ? "failed" : csv::fmt(trial.objective));
    row.push_back(csv::fmt(trial.seconds));
    t.rows.push_back(std::move(row));
  }
  csv::write_file(path, t);
}

}  // namespace riskcast
