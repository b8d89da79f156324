#pragma once

#include "riskcast/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace riskcast {

struct MalformedRow : DataError {
  using DataError::DataError;
};
struct DuplicateDay : DataError {
  using DataError::DataError;
};
struct UnknownColumn : DataError {
  using DataError::DataError;
};
struct MissingStatic : DataError {
  using DataError::DataError;
};

enum class FeatureKind { binary, ordinal, continuous };

struct FeatureDecl {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  int s_max = 1;           // ordinal upper bound
  bool zero_based = false; // ordinal range {0..s_max} instead of {1..s_max}

  bool value_ok(double v) const;
};

/// Ordered feature declarations for one cohort. The event series is implicit
/// and always named "event".
struct FeatureSchema {
  std::vector<FeatureDecl> dynamic;
  std::vector<FeatureDecl> statics;

  void validate() const;  // throws ConfigError on duplicate names / bad ordinals
  Index dynamic_index(const std::string& name) const;  // -1 if absent
  Index static_index(const std::string& name) const;
};

/// One patient's daily series. Rows of the dynamics matrix are features,
/// columns are days; NaN marks a missing dynamic value and event -1 marks a
/// missing event label (both only before cleaning).
struct PatientRecord {
  std::string patient_id;
  std::vector<int> days;            // days since 1970-01-01, strictly increasing
  std::vector<std::int8_t> events;  // 0/1, -1 = missing
  Matrix dynamics;                  // |F_d| x Tp
  Vector statics;                   // |F_s|

  Index length() const { return static_cast<Index>(days.size()); }
};

struct Cohort {
  FeatureSchema schema;
  std::vector<PatientRecord> patients;  // sorted by patient_id
};

int parse_iso_date(const std::string& s);
std::string format_iso_date(int days_since_epoch);

FeatureSchema load_schema(const std::string& path);
void save_schema(const FeatureSchema& schema, const std::string& path);

Cohort load_cohort(const std::string& events_path, const std::string& statics_path,
                   const FeatureSchema& schema);
void save_cohort(const Cohort& cohort, const std::string& events_path,
                 const std::string& statics_path);

enum class PatientFlag { ok, impute, drop };

struct ValidationEntry {
  std::string patient_id;
  PatientFlag flag = PatientFlag::ok;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;  // one per patient, cohort order

  Index count(PatientFlag f) const;
};

/// Reports per-patient cleaning decisions without mutating the cohort:
/// missing event labels => drop, missing dynamic values => impute.
ValidationReport validate_cohort(const Cohort& cohort);

/// Returns a cohort without the patients the report flags as drop.
Cohort drop_flagged(const Cohort& cohort, const ValidationReport& report);

const char* to_string(PatientFlag f);
const char* to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

}  // namespace riskcast
