#include "riskcast/preprocess.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace riskcast {

using nlohmann::json;

void PeriodParams::validate() const {
  if (boundary_daily_run < 1) throw ConfigError("boundary_daily_run must be >= 1");
  if (min_len_days < 2 * boundary_daily_run)
    throw ConfigError("min_len_days must be >= 2 * boundary_daily_run");
  if (max_mean_gap < 1.0) throw ConfigError("max_mean_gap must be >= 1");
}

namespace {

// entries s..s+run-1 exist and lie on consecutive days
bool daily_run_from(const std::vector<int>& days, Index s, int run) {
  if (s + run > static_cast<Index>(days.size())) return false;
  for (Index i = s; i < s + run - 1; ++i)
    if (days[i + 1] - days[i] != 1) return false;
  return true;
}

bool daily_run_ending_at(const std::vector<int>& days, Index e, int run) {
  return e - run + 1 >= 0 && daily_run_from(days, e - run + 1, run);
}

PatientRecord slice_record(const PatientRecord& rec, Index s, Index e) {
  PatientRecord out;
  out.patient_id = rec.patient_id;
  out.days.assign(rec.days.begin() + s, rec.days.begin() + e + 1);
  out.events.assign(rec.events.begin() + s, rec.events.begin() + e + 1);
  out.dynamics = rec.dynamics.middleCols(s, e - s + 1);
  out.statics = rec.statics;
  return out;
}

}  // namespace

std::vector<PatientRecord> extract_frequent_periods(const PatientRecord& rec,
                                                    const PeriodParams& params) {
  params.validate();
  const auto& days = rec.days;
  const Index n = rec.length();
  std::vector<PatientRecord> segments;

  Index s = 0;
  while (s < n) {
    if (!daily_run_from(days, s, params.boundary_daily_run)) {
      ++s;
      continue;
    }
    Index found = -1;
    for (Index e = n - 1; e > s; --e) {
      const int span = days[e] - days[s] + 1;
      if (span < params.min_len_days) break;  // shrinks further as e decreases
      if (!daily_run_ending_at(days, e, params.boundary_daily_run)) continue;
      const double mean_gap = double(days[e] - days[s]) / double(e - s);
      if (mean_gap > params.max_mean_gap) continue;
      found = e;
      break;
    }
    if (found >= 0) {
      segments.push_back(slice_record(rec, s, found));
      s = found + 1;
    } else {
      ++s;
    }
  }
  return segments;
}

ImputationFlags impute_dynamics(PatientRecord& segment) {
  const Index tp = segment.length();
  for (auto ev : segment.events)
    if (ev < 0)
      throw DataError("impute_dynamics requires a fully observed event series (patient '" +
                      segment.patient_id + "')");

  ImputationFlags flags;
  flags.imputed.assign(tp, 0);
  flags.multi_day_entry.assign(tp, 0);
  for (Index t = 1; t < tp; ++t)
    flags.multi_day_entry[t] = segment.days[t] - segment.days[t - 1] > 1;

  for (Index f = 0; f < segment.dynamics.rows(); ++f) {
    std::vector<Index> observed;
    for (Index t = 0; t < tp; ++t)
      if (!std::isnan(segment.dynamics(f, t))) observed.push_back(t);
    if (observed.empty())
      throw AllMissingFeature("dynamic feature row " + std::to_string(f) +
                              " has no observed values in series '" + segment.patient_id + "'");
    if (static_cast<Index>(observed.size()) == tp) continue;

    std::size_t next = 0;  // index into observed of first entry >= t
    for (Index t = 0; t < tp; ++t) {
      if (!std::isnan(segment.dynamics(f, t))) {
        if (next < observed.size() && observed[next] == t) ++next;
        continue;
      }
      const Index right = next < observed.size() ? observed[next] : -1;
      const Index left = next > 0 ? observed[next - 1] : -1;
      double v;
      if (left >= 0 && right >= 0) {
        const double va = segment.dynamics(f, left);
        const double vb = segment.dynamics(f, right);
        const double da = segment.days[left];
        const double db = segment.days[right];
        v = va + (vb - va) * (double(segment.days[t]) - da) / (db - da);
      } else {
        v = segment.dynamics(f, left >= 0 ? left : right);
      }
      segment.dynamics(f, t) = v;
      flags.imputed[t] = 1;
    }
  }
  return flags;
}

std::string series_id(const std::string& patient_id, int segment, int n_segments) {
  if (n_segments <= 1) return patient_id;
  return patient_id + "#" + std::to_string(segment);
}

CleanResult clean_cohort(const Cohort& cohort, const PeriodParams& params) {
  params.validate();
  for (const char* flag : {kImputedFlagName, kMultiDayFlagName})
    if (cohort.schema.dynamic_index(flag) >= 0 || cohort.schema.static_index(flag) >= 0)
      throw ConfigError(std::string("feature name '") + flag + "' is reserved for cleaning flags");

  CleanResult result;
  result.validation = validate_cohort(cohort);
  result.cleaned.schema = cohort.schema;
  result.cleaned.schema.dynamic.push_back({kImputedFlagName, FeatureKind::binary});
  result.cleaned.schema.dynamic.push_back({kMultiDayFlagName, FeatureKind::binary});

  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    if (result.validation.entries[i].flag == PatientFlag::drop) {
      ++result.patients_dropped;
      continue;
    }
    const auto& rec = cohort.patients[i];
    if (rec.patient_id.find('#') != std::string::npos)
      throw DataError("patient id '" + rec.patient_id + "' contains reserved character '#'");
    auto segments = extract_frequent_periods(rec, params);
    if (segments.empty()) {
      ++result.patients_no_segment;
      continue;
    }
    const int n_seg = static_cast<int>(segments.size());
    for (int k = 0; k < n_seg; ++k) {
      PatientRecord seg = std::move(segments[k]);
      const ImputationFlags flags = impute_dynamics(seg);
      const Index tp = seg.length();
      Matrix dyn(seg.dynamics.rows() + 2, tp);
      dyn.topRows(seg.dynamics.rows()) = seg.dynamics;
      for (Index t = 0; t < tp; ++t) {
        dyn(dyn.rows() - 2, t) = flags.imputed[t];
        dyn(dyn.rows() - 1, t) = flags.multi_day_entry[t];
      }
      seg.dynamics = std::move(dyn);
      result.series_patient.push_back(seg.patient_id);
      seg.patient_id = series_id(seg.patient_id, k, n_seg);
      result.cleaned.patients.push_back(std::move(seg));
    }
  }
  return result;
}

FeatureStats fit_feature_stats(const std::string& name, std::span<const double> values) {
  if (values.empty()) throw EmptyTraining("no training values for feature '" + name + "'");
  FeatureStats st;
  st.name = name;
  double sum = 0;
  for (double v : values) sum += v;
  st.mean = sum / double(values.size());
  double ss = 0;
  for (double v : values) ss += (v - st.mean) * (v - st.mean);
  st.std = std::sqrt(ss / double(values.size()));  // population convention
  st.constant = st.std <= 0.0;
  return st;
}

Index training_day_count(Index tp, double test_fraction) {
  const Index rho = static_cast<Index>(std::floor(test_fraction * double(tp)));
  return std::max<Index>(tp - rho - 1, 0);
}

StandardizationStats fit_standardizer(const Cohort& cleaned, double test_fraction) {
  if (cleaned.patients.empty()) throw EmptyTraining("empty cohort");
  StandardizationStats stats;
  stats.test_fraction = test_fraction;

  const auto& schema = cleaned.schema;
  for (Index f = 0; f < static_cast<Index>(schema.dynamic.size()); ++f) {
    const auto& decl = schema.dynamic[f];
    const bool is_flag =
        decl.name == kImputedFlagName || decl.name == kMultiDayFlagName;
    if (is_flag) {
      stats.dynamic.push_back({decl.name, 0.0, 1.0, false, false});
      continue;
    }
    std::vector<double> values;
    for (const auto& p : cleaned.patients) {
      const Index n_train = training_day_count(p.length(), test_fraction);
      for (Index t = 0; t < n_train; ++t) values.push_back(p.dynamics(f, t));
    }
    stats.dynamic.push_back(fit_feature_stats(decl.name, values));
  }
  for (Index f = 0; f < static_cast<Index>(schema.statics.size()); ++f) {
    std::vector<double> values;
    values.reserve(cleaned.patients.size());
    for (const auto& p : cleaned.patients) values.push_back(p.statics[f]);
    stats.statics.push_back(fit_feature_stats(schema.statics[f].name, values));
  }
  return stats;
}

Cohort apply_standardizer(const Cohort& cohort, const StandardizationStats& stats) {
  const auto& schema = cohort.schema;
  if (stats.dynamic.size() != schema.dynamic.size() ||
      stats.statics.size() != schema.statics.size())
    throw UnknownFeature("standardizer stats do not match cohort schema");
  for (std::size_t f = 0; f < stats.dynamic.size(); ++f)
    if (stats.dynamic[f].name != schema.dynamic[f].name)
      throw UnknownFeature("standardizer feature '" + stats.dynamic[f].name +
                           "' does not match schema feature '" + schema.dynamic[f].name + "'");
  for (std::size_t f = 0; f < stats.statics.size(); ++f)
    if (stats.statics[f].name != schema.statics[f].name)
      throw UnknownFeature("standardizer feature '" + stats.statics[f].name +
                           "' does not match schema feature '" + schema.statics[f].name + "'");

  Cohort out = cohort;
  for (auto& p : out.patients) {
    for (std::size_t f = 0; f < stats.dynamic.size(); ++f) {
      const auto& st = stats.dynamic[f];
      if (!st.scaled || st.constant) continue;
      p.dynamics.row(static_cast<Index>(f)) =
          (p.dynamics.row(static_cast<Index>(f)).array() - st.mean) / st.std;
    }
    for (std::size_t f = 0; f < stats.statics.size(); ++f) {
      const auto& st = stats.statics[f];
      if (!st.scaled || st.constant) continue;
      p.statics[static_cast<Index>(f)] = (p.statics[static_cast<Index>(f)] - st.mean) / st.std;
    }
  }
  return out;
}

namespace {

json stats_to_json(const FeatureStats& st) {
  return json{{"name", st.name},
              {"mean", st.mean},
              {"std", st.std},
              {"constant", st.constant},
              {"scaled", st.scaled}};
}

FeatureStats stats_from_json(const json& j) {
  FeatureStats st;
  st.name = j.at("name").get<std::string>();
  st.mean = j.at("mean").get<double>();
  st.std = j.at("std").get<double>();
  st.constant = j.at("constant").get<bool>();
  st.scaled = j.at("scaled").get<bool>();
  return st;
}

}  // namespace

void save_stats(const StandardizationStats& stats, const std::string& path) {
  json j;
  j["test_fraction"] = stats.test_fraction;
  j["dynamic"] = json::array();
  j["static"] = json::array();
  for (const auto& st : stats.dynamic) j["dynamic"].push_back(stats_to_json(st));
  for (const auto& st : stats.statics) j["static"].push_back(stats_to_json(st));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write stats file: " + path);
  out << j.dump(2) << '\n';
}

StandardizationStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stats file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("stats parse error in " + path + ": " + e.what());
  }
  StandardizationStats stats;
  stats.test_fraction = j.at("test_fraction").get<double>();
  for (const auto& s : j.at("dynamic")) stats.dynamic.push_back(stats_from_json(s));
  for (const auto& s : j.at("static")) stats.statics.push_back(stats_from_json(s));
  return stats;
}

}  // namespace riskcast
