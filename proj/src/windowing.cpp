#include "riskcast/windowing.hpp"

#include "riskcast/csv.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace riskcast {

SeriesStore build_series(const Cohort& cleaned, const StandardizationStats& stats) {
  const Cohort scaled = apply_standardizer(cleaned, stats);
  auto bundle = std::make_shared<SeriesBundle>();
  bundle->schema = cleaned.schema;
  auto& out = bundle->series;
  out.reserve(cleaned.patients.size());
  for (std::size_t i = 0; i < cleaned.patients.size(); ++i) {
    const auto& raw = cleaned.patients[i];
    const auto& std_rec = scaled.patients[i];
    SeriesData s;
    s.series_id = raw.patient_id;
    const auto hash = raw.patient_id.find('#');
    s.patient_id = hash == std::string::npos ? raw.patient_id : raw.patient_id.substr(0, hash);
    s.days = raw.days;
    s.events.reserve(raw.events.size());
    for (auto ev : raw.events) {
      if (ev < 0)
        throw DataError("series '" + raw.patient_id + "' still has missing event labels");
      s.events.push_back(static_cast<std::uint8_t>(ev));
    }
    const Index tp = raw.length();
    const Index fd = std_rec.dynamics.rows();
    const Index fs = std_rec.statics.size();
    s.inputs.resize(1 + fd + fs, tp);
    for (Index t = 0; t < tp; ++t) s.inputs(0, t) = s.events[t];
    s.inputs.middleRows(1, fd) = std_rec.dynamics;
    s.inputs.bottomRows(fs).colwise() = std_rec.statics;
    s.raw_dynamics = raw.dynamics;
    out.push_back(std::move(s));
  }
  return bundle;
}

WindowDataset::WindowDataset(SeriesStore series, Index n) : series_(std::move(series)), n_(n) {
  if (n_ < 1) throw ConfigError("window length must be >= 1");
  if (!series_ || series_->series.empty()) throw DataError("no series to window");
  input_dim_ = series_->series[0].inputs.rows();
  for (Index i = 0; i < static_cast<Index>(series_->series.size()); ++i) {
    const auto& s = series_->series[i];
    if (s.inputs.rows() != input_dim_)
      throw DimensionMismatch("series '" + s.series_id + "' input dimension mismatch");
    const Index count = std::max<Index>(s.length() - n_, 0);
    for (Index w = 0; w < count; ++w) windows_.push_back({i, w});
  }
}

SplitWindows split_train_test(const WindowDataset& ds, double test_fraction) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ConfigError("test_fraction must be in (0,1)");
  SplitWindows out;
  out.n = ds.n();
  const auto& all = ds.series();
  out.rho.resize(all.size(), 0);
  for (Index i = 0; i < static_cast<Index>(all.size()); ++i) {
    const Index tp = all[i].length();
    const Index n_windows = std::max<Index>(tp - ds.n(), 0);
    const Index rho = static_cast<Index>(std::floor(test_fraction * double(tp)));
    if (rho > n_windows)
      throw InsufficientHistory("series '" + all[i].series_id + "': rho=" + std::to_string(rho) +
                                " test windows requested but only " + std::to_string(n_windows) +
                                " windows exist (Tp=" + std::to_string(tp) +
                                ", n=" + std::to_string(ds.n()) + ")");
    out.rho[i] = rho;
  }
  for (const auto& ref : ds.windows()) {
    const Index tp = all[ref.series].length();
    const Index first_test_start = tp - ds.n() - out.rho[ref.series];
    (ref.start >= first_test_start ? out.test : out.train).push_back(ref);
  }
  return out;
}

CvFolds build_cv_folds(const WindowDataset& ds, std::span<const WindowRef> train, int k) {
  if (k < 1) throw ConfigError("cv fold count must be >= 1");
  const int pools = k + 1;
  CvFolds out;
  out.folds.resize(k);

  // group per series, preserving chronological order
  std::map<Index, std::vector<WindowRef>> per_series;
  for (const auto& ref : train) per_series[ref.series].push_back(ref);

  for (auto& [series, refs] : per_series) {
    std::sort(refs.begin(), refs.end(),
              [](const WindowRef& a, const WindowRef& b) { return a.start < b.start; });
    const Index nw = static_cast<Index>(refs.size());
    if (nw < pools) {
      out.excluded_series.push_back(ds.series()[series].series_id);
      continue;
    }
    const Index base = nw / pools;
    const Index rem = nw % pools;
    Index pos = 0;
    std::vector<std::pair<Index, Index>> pool_range(pools);  // [begin, end)
    for (int p = 0; p < pools; ++p) {
      const Index size = base + (p < rem ? 1 : 0);
      pool_range[p] = {pos, pos + size};
      pos += size;
    }
    for (int i = 0; i < k; ++i) {
      auto& fold = out.folds[i];
      for (int p = 0; p <= i; ++p)
        for (Index j = pool_range[p].first; j < pool_range[p].second; ++j)
          fold.train.push_back(refs[j]);
      for (Index j = pool_range[i + 1].first; j < pool_range[i + 1].second; ++j)
        fold.validation.push_back(refs[j]);
    }
  }
  return out;
}

Batch assemble_batch(const WindowDataset& ds, std::span<const WindowRef> refs) {
  Batch batch;
  const Index b = static_cast<Index>(refs.size());
  const Index m = ds.input_dim();
  batch.x.resize(ds.n());
  for (auto& x : batch.x) x.resize(m, b);
  batch.labels.resize(b);
  const auto& series = ds.series();
  for (Index j = 0; j < b; ++j) {
    const auto& ref = refs[j];
    const auto& s = series[ref.series];
    for (Index t = 0; t < ds.n(); ++t) batch.x[t].col(j) = s.inputs.col(ref.start + t);
    batch.labels[j] = ds.label(ref);
  }
  return batch;
}

std::vector<std::pair<std::string, Index>> label_keys(const WindowDataset& ds,
                                                      std::span<const WindowRef> refs) {
  std::vector<std::pair<std::string, Index>> keys;
  keys.reserve(refs.size());
  for (const auto& ref : refs)
    keys.emplace_back(ds.series()[ref.series].series_id, ds.label_pos(ref) + 1);
  return keys;
}

void save_window_dump(const WindowDataset& ds, std::span<const WindowRef> refs,
                      const std::string& path) {
  csv::Table t;
  t.header = {"patient_id", "w", "n", "label_index", "label"};
  for (const auto& ref : refs) {
    t.rows.push_back({ds.series()[ref.series].series_id, std::to_string(ref.start + 1),
                      std::to_string(ds.n()), std::to_string(ds.label_pos(ref) + 1),
                      std::to_string(ds.label(ref))});
  }
  csv::write_file(path, t);
}

}  // namespace riskcast
