#pragma once

#include "riskcast/cohort.hpp"
#include "riskcast/preprocess.hpp"
#include "riskcast/types.hpp"

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace riskcast {

struct InsufficientHistory : DataError {
  using DataError::DataError;
};

/// One cleaned series laid out for windowing. Column t of `inputs` is the
/// model input row x_t = y_t ++ D_t ++ S (event, standardized dynamics,
/// standardized statics). raw_dynamics keeps pre-standardization values for
/// scorers that read raw instrument components.
struct SeriesData {
  std::string series_id;
  std::string patient_id;
  std::vector<int> days;
  std::vector<std::uint8_t> events;
  Matrix inputs;        // m x Tp
  Matrix raw_dynamics;  // |F_d| x Tp

  Index length() const { return static_cast<Index>(days.size()); }
};

struct SeriesBundle {
  std::vector<SeriesData> series;
  FeatureSchema schema;  // cleaned schema (includes flag features)
};

using SeriesStore = std::shared_ptr<const SeriesBundle>;

/// Applies the standardizer and lays out model inputs per series.
SeriesStore build_series(const Cohort& cleaned, const StandardizationStats& stats);

/// A window is a view (series, start): input days start..start+n-1 and label
/// events[start+n]. Indices are 0-based in memory; file formats emit the
/// 1-based w and label_index = w+n convention.
struct WindowRef {
  Index series = 0;
  Index start = 0;
};

class WindowDataset {
 public:
  WindowDataset(SeriesStore series, Index n);

  Index n() const { return n_; }
  Index input_dim() const { return input_dim_; }
  const std::vector<SeriesData>& series() const { return series_->series; }
  const FeatureSchema& schema() const { return series_->schema; }
  SeriesStore series_store() const { return series_; }

  /// All windows, series-major, chronological within series.
  const std::vector<WindowRef>& windows() const { return windows_; }

  int label(const WindowRef& ref) const {
    const auto& s = series_->series[ref.series];
    return s.events[ref.start + n_];
  }
  /// 0-based index of the label day within its series (= start + n).
  Index label_pos(const WindowRef& ref) const { return ref.start + n_; }
  int label_day(const WindowRef& ref) const {
    return series_->series[ref.series].days[ref.start + n_];
  }

 private:
  SeriesStore series_;
  Index n_ = 1;
  Index input_dim_ = 0;
  std::vector<WindowRef> windows_;
};

struct SplitWindows {
  Index n = 1;
  std::vector<WindowRef> train;
  std::vector<WindowRef> test;
  std::vector<Index> rho;  // per-series test window count
};

/// Last floor(test_fraction * Tp) windows of every series form the test set;
/// the rest train. Throws InsufficientHistory when a series has fewer windows
/// than its rho.
SplitWindows split_train_test(const WindowDataset& ds, double test_fraction = 0.2);

struct CvFold {
  std::vector<WindowRef> train;
  std::vector<WindowRef> validation;
};

struct CvFolds {
  std::vector<CvFold> folds;
  std::vector<std::string> excluded_series;  // fewer than k+1 training windows
};

/// Expanding sequential cross-validation: per series the training windows are
/// cut chronologically into k+1 near-equal pools (remainder to the earliest);
/// fold i trains on pools 1..i and validates on pool i+1, pooled across
/// series.
CvFolds build_cv_folds(const WindowDataset& ds, std::span<const WindowRef> train, int k = 5);

/// Dense batch layout consumed by the recurrent model: x[t] is m x B, one
/// column per window.
struct Batch {
  std::vector<Matrix> x;
  RowVector labels;

  Index size() const { return labels.size(); }
};

Batch assemble_batch(const WindowDataset& ds, std::span<const WindowRef> refs);

/// (series_id, 1-based label index) keys identifying forecast labels.
std::vector<std::pair<std::string, Index>> label_keys(const WindowDataset& ds,
                                                      std::span<const WindowRef> refs);

/// Audit dump: patient_id,w,n,label_index,label (1-based w).
void save_window_dump(const WindowDataset& ds, std::span<const WindowRef> refs,
                      const std::string& path);

}  // namespace riskcast
