#pragma once

#include "riskcast/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace riskcast {

struct DegenerateLabels : DataError {
  using DataError::DataError;
};
struct DegenerateResample : DataError {
  using DataError::DataError;
};

/// One retained operating point. Confusion counts are doubles because the
/// entry point at rec_gain = 0 is interpolated between achievable counts.
struct PRGPoint {
  double rec_gain = 0.0;
  double prec_gain = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

struct PRGCurve {
  std::vector<PRGPoint> points;  // rec_gain nondecreasing, ends at the always-positive point
  double pi = 0.0;               // positive prevalence
};

/// Precision-Recall-Gain curve: thresholds enumerated descending with ties
/// grouped, gains computed from confusion counts, sub-baseline points
/// (TP = 0 or rec_gain < 0) discarded, the rec_gain = 0 entry point
/// interpolated in count space, and prec_gain clamped to [0,1].
PRGCurve prg_curve(std::span<const double> scores, std::span<const double> labels);

/// Trapezoidal area of prec_gain over rec_gain in [0,1].
double auc_prg(const PRGCurve& curve);
double auc_prg(std::span<const double> scores, std::span<const double> labels);

/// Rank statistic with midrank tie handling (reference metric only).
double roc_auc(std::span<const double> scores, std::span<const double> labels);

/// Pooled test windows with one score column per model. Rows are
/// chronological within each patient; every model shares the label vector.
struct ScoredTestSet {
  std::vector<std::string> series_id;
  std::vector<std::string> patient_id;
  std::vector<Index> label_index;  // 1-based within series
  std::vector<int> label_day;
  std::vector<double> labels;
  std::vector<std::string> model_names;
  Matrix scores;  // rows x models

  Index rows() const { return static_cast<Index>(labels.size()); }
  Index models() const { return static_cast<Index>(model_names.size()); }
  void add_model(const std::string& name, const Vector& model_scores);
  Index model_column(const std::string& name) const;  // -1 if absent
  double prevalence() const;
};

struct ModelBootstrap {
  std::string name;
  double point_auc = 0.0;
  std::vector<double> resamples;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool ci_contains_point = true;
  double ks_stat = 0.0;
  double ks_p = 1.0;
};

struct BootstrapReport {
  Index n_resamples = 0;
  Index block_len = 10;
  std::uint64_t seed = 0;
  Index degenerate_redraws = 0;
  std::vector<ModelBootstrap> models;
  /// p(a,b) = (1 + #{resamples with AUC_a - AUC_b <= 0}) / (B + 1); the
  /// one-sided test of H0: model a <= model b.
  Matrix p_values;
};

/// Per-patient row groups in first-appearance order; rows stay chronological
/// within each patient.
std::vector<std::vector<Index>> patient_groups(const ScoredTestSet& testset);

/// One stratified resample: per group, overlapping circular blocks of
/// block_len drawn until the group's own count is reached (overflow
/// truncated).
std::vector<Index> resample_rows(const std::vector<std::vector<Index>>& groups,
                                 Index block_len, Rng& rng);

/// Stratified moving block bootstrap: each resample redraws every patient's
/// test windows from that patient's own sequence using overlapping circular
/// blocks of block_len, so per-patient window counts (and hence prevalence)
/// are preserved. Scores of all models travel with the label.
BootstrapReport block_bootstrap(const ScoredTestSet& testset, Index n_resamples,
                                Index block_len, std::uint64_t seed);

struct ComparisonRow {
  std::string name;
  double auc = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double diff_vs_top = 0.0;  // AUC_top - AUC_model
  double p_vs_top = 1.0;
};

/// Rows sorted by AUC-PRG descending; the top row's diff/p refer to itself.
std::vector<ComparisonRow> comparison_table(const BootstrapReport& report);

/// Kolmogorov-Smirnov distance of a sample against a normal fitted to its
/// own mean/sd, with Stephens' approximate p-value (Lilliefors-style).
std::pair<double, double> ks_normality(std::span<const double> sample);

/// Nearest-rank percentile of a sample (q in [0,1]).
double percentile(std::vector<double> values, double q);

void save_prg_csv(const std::vector<std::pair<std::string, PRGCurve>>& curves,
                  const std::string& path);
void save_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path);

}  // namespace riskcast
