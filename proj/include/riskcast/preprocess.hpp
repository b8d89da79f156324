#pragma once

#include "riskcast/cohort.hpp"
#include "riskcast/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace riskcast {

struct AllMissingFeature : DataError {
  using DataError::DataError;
};
struct UnknownFeature : DataError {
  using DataError::DataError;
};

/// Frequent-assessment-period rules: a qualifying segment spans at least
/// min_len_days calendar days, starts and ends with boundary_daily_run
/// entries on consecutive days, and has mean inter-entry gap
/// (t_last - t_first)/(N-1) <= max_mean_gap.
struct PeriodParams {
  int min_len_days = 30;
  int boundary_daily_run = 5;
  double max_mean_gap = 1.1;

  void validate() const;
};

/// Maximal non-overlapping qualifying segments, greedy left-to-right with the
/// longest qualifying extension per start. Entries outside all segments are
/// discarded. Segment ids stay equal to the patient id here; clean_cohort
/// renames when a patient yields more than one segment.
std::vector<PatientRecord> extract_frequent_periods(const PatientRecord& rec,
                                                    const PeriodParams& params);

struct ImputationFlags {
  std::vector<std::uint8_t> imputed;          // any dynamic value filled that day
  std::vector<std::uint8_t> multi_day_entry;  // gap to previous entry > 1 day
};

/// Fills missing dynamic values in place by linear interpolation between the
/// nearest observed neighbours (in calendar days); boundary gaps take the
/// nearest observed value. Observed values are never altered.
ImputationFlags impute_dynamics(PatientRecord& segment);

/// Flag feature names appended by clean_cohort.
inline constexpr const char* kImputedFlagName = "imputed";
inline constexpr const char* kMultiDayFlagName = "multi_day_entry";

struct CleanResult {
  Cohort cleaned;                // one "patient" per retained segment (series)
  ValidationReport validation;   // over the input cohort
  std::vector<std::string> series_patient;  // base patient id per cleaned series
  Index patients_dropped = 0;    // missing event labels
  Index patients_no_segment = 0; // no qualifying frequent-assessment period
};

/// Full cleaning pass: drop patients with missing event labels, extract
/// frequent-assessment periods, impute dynamics, and append the two binary
/// flag series as dynamic features visible to all models.
CleanResult clean_cohort(const Cohort& cohort, const PeriodParams& params);

/// Series id for segment k of a patient ("<pid>" if the patient has a single
/// segment, else "<pid>#<k>").
std::string series_id(const std::string& patient_id, int segment, int n_segments);

struct FeatureStats {
  std::string name;
  double mean = 0.0;
  double std = 1.0;
  bool constant = false;  // zero variance: passed through unscaled
  bool scaled = true;     // false for event/flag series
};

struct StandardizationStats {
  std::vector<FeatureStats> dynamic;  // aligned with schema.dynamic
  std::vector<FeatureStats> statics;  // aligned with schema.statics
  double test_fraction = 0.2;
};

/// Population-convention mean/std of one feature's pooled training values.
FeatureStats fit_feature_stats(const std::string& name, std::span<const double> values);

/// Number of leading days of a series whose values feed training windows:
/// Tp - floor(test_fraction * Tp) - 1 (independent of the window length).
Index training_day_count(Index tp, double test_fraction);

/// Fits per-feature statistics on the pooled training days of the cleaned
/// cohort. Dynamic features pool values across all series' training days;
/// static features contribute one value per series. The event series and the
/// appended flag series are excluded from scaling.
StandardizationStats fit_standardizer(const Cohort& cleaned, double test_fraction);

/// x' = (x - mean)/std per scaled feature, applied to every day (train and
/// test alike). Constant features pass through unchanged.
Cohort apply_standardizer(const Cohort& cohort, const StandardizationStats& stats);

void save_stats(const StandardizationStats& stats, const std::string& path);
StandardizationStats load_stats(const std::string& path);

}  // namespace riskcast
