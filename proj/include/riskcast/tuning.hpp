#pragma once

#include "riskcast/types.hpp"
#include "riskcast/windowing.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace riskcast {

struct SearchDim {
  enum class Type { integer, real, log_real };
  std::string name;
  Type type = Type::real;
  double lo = 0.0;
  double hi = 1.0;
};

struct SearchSpace {
  std::vector<SearchDim> dims;

  void validate() const;
  /// Stacked-recurrent space: hidden 10-100, layers 1-4, dropout 0.10-0.50,
  /// l2 1e-6..1e-3 (log-uniform), epochs 10-100. Batch 512 and learning rate
  /// 1e-4 stay fixed.
  static SearchSpace recurrent_default();
  static SearchSpace logistic_default();
  static SearchSpace ffnn_default();
};

using ConfigMap = std::map<std::string, double>;

struct Trial {
  ConfigMap params;
  std::vector<double> fold_scores;  // validation AUC-PRG per fold
  double objective = 0.0;           // mean over folds; -inf when failed
  bool failed = false;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

enum class SearchStrategy { random, tpe };
SearchStrategy search_strategy_from_string(const std::string& s);
const char* to_string(SearchStrategy s);

/// Draws the next configuration. Random: independent per-dimension draws
/// (log-uniform on log dims). TPE: univariate Parzen densities over the
/// good/bad split of past objectives at the 0.25 quantile, candidates scored
/// by the good/bad log-density ratio; falls back to the prior while warming
/// up or when the split is degenerate.
ConfigMap sample_config(const SearchSpace& space, const std::vector<Trial>& history,
                        SearchStrategy strategy, Rng& rng, int warmup = 20);

/// Scores one sampled configuration on one fold (train on fold.train,
/// validation AUC-PRG on fold.validation).
using FoldEvaluator =
    std::function<double(const ConfigMap& params, const CvFold& fold, std::uint64_t seed)>;

struct SearchResult {
  std::vector<Trial> trials;
  Index best_index = -1;

  const Trial& best() const;
};

/// Sequential search over `iterations` trials; each trial averages the
/// evaluator over all folds. Errors fail the trial (objective -inf) without
/// aborting the search. Ties break to the earliest trial.
SearchResult run_search(const SearchSpace& space, const CvFolds& folds,
                        const FoldEvaluator& evaluate, int iterations, std::uint64_t seed,
                        SearchStrategy strategy = SearchStrategy::tpe, int warmup = 20);

void save_trial_log(const SearchSpace& space, const SearchResult& result,
                    const std::string& path);

}  // namespace riskcast
