#pragma once

#include "riskcast/cohort.hpp"
#include "riskcast/preprocess.hpp"
#include "riskcast/types.hpp"
#include "riskcast/windowing.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace riskcast::test {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("riskcast_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline StandardizationStats identity_stats(const FeatureSchema& schema) {
  StandardizationStats stats;
  for (const auto& d : schema.dynamic) stats.dynamic.push_back({d.name, 0.0, 1.0, false, false});
  for (const auto& d : schema.statics) stats.statics.push_back({d.name, 0.0, 1.0, false, false});
  return stats;
}

/// Builds a single-feature-schema series bundle directly from event bits and
/// per-series dynamics/statics. Days are consecutive starting at day 0.
inline SeriesStore make_store(const std::vector<std::vector<std::uint8_t>>& events,
                              Index n_dynamic = 1, Index n_static = 1,
                              std::uint64_t seed = 42) {
  Cohort cohort;
  for (Index f = 0; f < n_dynamic; ++f)
    cohort.schema.dynamic.push_back({"d" + std::to_string(f), FeatureKind::continuous});
  for (Index f = 0; f < n_static; ++f)
    cohort.schema.statics.push_back({"s" + std::to_string(f), FeatureKind::continuous});
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t p = 0; p < events.size(); ++p) {
    PatientRecord rec;
    rec.patient_id = "p" + std::to_string(p);
    const Index tp = static_cast<Index>(events[p].size());
    for (Index t = 0; t < tp; ++t) {
      rec.days.push_back(static_cast<int>(t));
      rec.events.push_back(static_cast<std::int8_t>(events[p][t]));
    }
    rec.dynamics.resize(n_dynamic, tp);
    for (Index i = 0; i < rec.dynamics.size(); ++i) rec.dynamics.data()[i] = noise(rng);
    rec.statics.resize(n_static);
    for (Index i = 0; i < n_static; ++i) rec.statics[i] = noise(rng);
    cohort.patients.push_back(std::move(rec));
  }
  return build_series(cohort, identity_stats(cohort.schema));
}

inline std::vector<std::vector<std::uint8_t>> random_events(Index patients, Index min_len,
                                                            Index max_len, double rate,
                                                            std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<Index> len(min_len, max_len);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<std::uint8_t>> out(patients);
  for (auto& series : out) {
    const Index tp = len(rng);
    series.resize(tp);
    for (auto& e : series) e = u(rng) < rate ? 1 : 0;
  }
  return out;
}

inline bool records_equal(const PatientRecord& a, const PatientRecord& b) {
  if (a.patient_id != b.patient_id || a.days != b.days || a.events != b.events) return false;
  if (a.dynamics.rows() != b.dynamics.rows() || a.dynamics.cols() != b.dynamics.cols())
    return false;
  for (Index i = 0; i < a.dynamics.size(); ++i) {
    const double x = a.dynamics.data()[i], y = b.dynamics.data()[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  if (a.statics.size() != b.statics.size()) return false;
  for (Index i = 0; i < a.statics.size(); ++i)
    if (a.statics[i] != b.statics[i]) return false;
  return true;
}

inline bool cohorts_equal(const Cohort& a, const Cohort& b) {
  if (a.patients.size() != b.patients.size()) return false;
  for (std::size_t i = 0; i < a.patients.size(); ++i)
    if (!records_equal(a.patients[i], b.patients[i])) return false;
  return true;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace riskcast::test
