#include "riskcast/cohort.hpp"

#include "riskcast/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace riskcast {

using nlohmann::json;

bool FeatureDecl::value_ok(double v) const {
  if (!std::isfinite(v)) return false;
  switch (kind) {
    case FeatureKind::binary:
      return v == 0.0 || v == 1.0;
    case FeatureKind::ordinal: {
      if (v != std::floor(v)) return false;
      const int lo = zero_based ? 0 : 1;
      return v >= lo && v <= s_max;
    }
    case FeatureKind::continuous:
      return true;
  }
  return false;
}

void FeatureSchema::validate() const {
  std::set<std::string> names{"event"};
  auto check = [&](const FeatureDecl& d) {
    if (d.name.empty()) throw ConfigError("schema: empty feature name");
    if (!names.insert(d.name).second)
      throw ConfigError("schema: duplicate feature name '" + d.name + "'");
    if (d.kind == FeatureKind::ordinal && d.s_max < 1)
      throw ConfigError("schema: ordinal feature '" + d.name + "' needs s_max >= 1");
  };
  for (const auto& d : dynamic) check(d);
  for (const auto& d : statics) check(d);
}

Index FeatureSchema::dynamic_index(const std::string& name) const {
  for (Index i = 0; i < static_cast<Index>(dynamic.size()); ++i)
    if (dynamic[i].name == name) return i;
  return -1;
}

Index FeatureSchema::static_index(const std::string& name) const {
  for (Index i = 0; i < static_cast<Index>(statics.size()); ++i)
    if (statics[i].name == name) return i;
  return -1;
}

int parse_iso_date(const std::string& s) {
  int y = 0, m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
      std::from_chars(s.data(), s.data() + 4, y).ec != std::errc() ||
      std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc() ||
      std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc())
    throw MalformedRow("bad ISO date '" + s + "'");
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) throw MalformedRow("invalid calendar date '" + s + "'");
  return static_cast<int>(std::chrono::sys_days(ymd).time_since_epoch().count());
}

std::string format_iso_date(int days_since_epoch) {
  const std::chrono::sys_days sd{std::chrono::days{days_since_epoch}};
  const std::chrono::year_month_day ymd{sd};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()));
  return buf;
}

const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::binary: return "binary";
    case FeatureKind::ordinal: return "ordinal";
    case FeatureKind::continuous: return "continuous";
  }
  return "?";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "binary") return FeatureKind::binary;
  if (s == "ordinal") return FeatureKind::ordinal;
  if (s == "continuous") return FeatureKind::continuous;
  throw ConfigError("unknown feature kind '" + s + "'");
}

namespace {

json decl_to_json(const FeatureDecl& d) {
  json j{{"name", d.name}, {"kind", to_string(d.kind)}};
  if (d.kind == FeatureKind::ordinal) {
    j["s_max"] = d.s_max;
    j["zero_based"] = d.zero_based;
  }
  return j;
}

FeatureDecl decl_from_json(const json& j) {
  FeatureDecl d;
  d.name = j.at("name").get<std::string>();
  d.kind = feature_kind_from_string(j.at("kind").get<std::string>());
  if (d.kind == FeatureKind::ordinal) {
    d.s_max = j.at("s_max").get<int>();
    d.zero_based = j.value("zero_based", false);
  }
  return d;
}

}  // namespace

FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("schema parse error in " + path + ": " + e.what());
  }
  FeatureSchema s;
  try {
    for (const auto& d : j.at("dynamic")) s.dynamic.push_back(decl_from_json(d));
    for (const auto& d : j.at("static")) s.statics.push_back(decl_from_json(d));
  } catch (const json::exception& e) {
    throw ConfigError("schema structure error in " + path + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_schema(const FeatureSchema& schema, const std::string& path) {
  json j;
  j["dynamic"] = json::array();
  j["static"] = json::array();
  for (const auto& d : schema.dynamic) j["dynamic"].push_back(decl_to_json(d));
  for (const auto& d : schema.statics) j["static"].push_back(decl_to_json(d));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write schema file: " + path);
  out << j.dump(2) << '\n';
}

namespace {

double parse_feature_value(const std::string& raw, const FeatureDecl& decl,
                           const std::string& context) {
  double v = 0;
  try {
    v = csv::parse_double(raw, context);
  } catch (const DataError& e) {
    throw MalformedRow(e.what());
  }
  if (!decl.value_ok(v))
    throw MalformedRow("value '" + raw + "' out of range for " + to_string(decl.kind) +
                       " feature '" + decl.name + "' in " + context);
  return v;
}

}  // namespace

Cohort load_cohort(const std::string& events_path, const std::string& statics_path,
                   const FeatureSchema& schema) {
  schema.validate();
  const csv::Table events = csv::read_file(events_path);
  const csv::Table statics = csv::read_file(statics_path);

  if (events.header.size() < 3 || events.header[0] != "patient_id" ||
      events.header[1] != "date" || events.header[2] != "event")
    throw UnknownColumn("events file must start with patient_id,date,event: " + events_path);

  // map dynamic feature -> column
  std::vector<Index> dyn_col(schema.dynamic.size(), -1);
  for (Index c = 3; c < static_cast<Index>(events.header.size()); ++c) {
    const Index f = schema.dynamic_index(events.header[c]);
    if (f < 0)
      throw UnknownColumn("events column '" + events.header[c] + "' not in schema");
    dyn_col[f] = c;
  }
  for (std::size_t f = 0; f < schema.dynamic.size(); ++f)
    if (dyn_col[f] < 0)
      throw UnknownColumn("schema dynamic feature '" + schema.dynamic[f].name +
                          "' missing from events file");

  if (statics.header.empty() || statics.header[0] != "patient_id")
    throw UnknownColumn("statics file must start with patient_id: " + statics_path);
  std::vector<Index> stat_col(schema.statics.size(), -1);
  for (Index c = 1; c < static_cast<Index>(statics.header.size()); ++c) {
    const Index f = schema.static_index(statics.header[c]);
    if (f < 0)
      throw UnknownColumn("statics column '" + statics.header[c] + "' not in schema");
    stat_col[f] = c;
  }
  for (std::size_t f = 0; f < schema.statics.size(); ++f)
    if (stat_col[f] < 0)
      throw UnknownColumn("schema static feature '" + schema.statics[f].name +
                          "' missing from statics file");

  struct DayRow {
    int day;
    std::int8_t event;
    std::vector<double> dyn;
  };
  std::map<std::string, std::vector<DayRow>> by_patient;

  for (std::size_t r = 0; r < events.rows.size(); ++r) {
    const auto& row = events.rows[r];
    const std::string context = events_path + " row " + std::to_string(r + 2);
    if (row.size() != events.header.size())
      throw MalformedRow("wrong field count in " + context);
    DayRow dr;
    dr.day = parse_iso_date(row[1]);
    const std::string& ev = row[2];
    if (ev.empty()) {
      dr.event = -1;
    } else if (ev == "0" || ev == "1") {
      dr.event = static_cast<std::int8_t>(ev[0] - '0');
    } else {
      throw MalformedRow("event value '" + ev + "' not in {0,1,empty} in " + context);
    }
    dr.dyn.resize(schema.dynamic.size());
    for (std::size_t f = 0; f < schema.dynamic.size(); ++f) {
      const std::string& raw = row[dyn_col[f]];
      dr.dyn[f] = raw.empty() ? std::numeric_limits<double>::quiet_NaN()
                              : parse_feature_value(raw, schema.dynamic[f], context);
    }
    by_patient[row[0]].push_back(std::move(dr));
  }

  std::map<std::string, Vector> static_by_patient;
  for (std::size_t r = 0; r < statics.rows.size(); ++r) {
    const auto& row = statics.rows[r];
    const std::string context = statics_path + " row " + std::to_string(r + 2);
    if (row.size() != statics.header.size())
      throw MalformedRow("wrong field count in " + context);
    Vector vals(schema.statics.size());
    for (std::size_t f = 0; f < schema.statics.size(); ++f) {
      const std::string& raw = row[stat_col[f]];
      if (raw.empty())
        throw MalformedRow("missing static value for '" + schema.statics[f].name + "' in " +
                           context);
      vals[static_cast<Index>(f)] = parse_feature_value(raw, schema.statics[f], context);
    }
    if (!static_by_patient.emplace(row[0], std::move(vals)).second)
      throw MalformedRow("duplicate statics row for patient '" + row[0] + "' in " + context);
  }

  Cohort cohort;
  cohort.schema = schema;
  for (auto& [pid, rows] : by_patient) {
    auto it = static_by_patient.find(pid);
    if (it == static_by_patient.end())
      throw MissingStatic("patient '" + pid + "' has no statics row");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const DayRow& a, const DayRow& b) { return a.day < b.day; });
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].day == rows[i - 1].day)
        throw DuplicateDay("patient '" + pid + "' has duplicate date " +
                           format_iso_date(rows[i].day));
    PatientRecord rec;
    rec.patient_id = pid;
    const Index tp = static_cast<Index>(rows.size());
    rec.days.reserve(rows.size());
    rec.events.reserve(rows.size());
    rec.dynamics.resize(static_cast<Index>(schema.dynamic.size()), tp);
    for (Index t = 0; t < tp; ++t) {
      rec.days.push_back(rows[t].day);
      rec.events.push_back(rows[t].event);
      for (std::size_t f = 0; f < schema.dynamic.size(); ++f)
        rec.dynamics(static_cast<Index>(f), t) = rows[t].dyn[f];
    }
    rec.statics = it->second;
    cohort.patients.push_back(std::move(rec));
  }
  return cohort;
}

void save_cohort(const Cohort& cohort, const std::string& events_path,
                 const std::string& statics_path) {
  csv::Table events;
  events.header = {"patient_id", "date", "event"};
  for (const auto& d : cohort.schema.dynamic) events.header.push_back(d.name);
  for (const auto& p : cohort.patients) {
    for (Index t = 0; t < p.length(); ++t) {
      std::vector<std::string> row;
      row.reserve(events.header.size());
      row.push_back(p.patient_id);
      row.push_back(format_iso_date(p.days[t]));
      row.push_back(p.events[t] < 0 ? "" : std::to_string(int(p.events[t])));
      for (Index f = 0; f < p.dynamics.rows(); ++f) {
        const double v = p.dynamics(f, t);
        row.push_back(std::isnan(v) ? "" : csv::fmt(v));
      }
      events.rows.push_back(std::move(row));
    }
  }
  csv::write_file(events_path, events);

  csv::Table statics;
  statics.header = {"patient_id"};
  for (const auto& d : cohort.schema.statics) statics.header.push_back(d.name);
  for (const auto& p : cohort.patients) {
    std::vector<std::string> row{p.patient_id};
    for (Index f = 0; f < p.statics.size(); ++f) row.push_back(csv::fmt(p.statics[f]));
    statics.rows.push_back(std::move(row));
  }
  csv::write_file(statics_path, statics);
}

Index ValidationReport::count(PatientFlag f) const {
  Index n = 0;
  for (const auto& e : entries) n += (e.flag == f);
  return n;
}

const char* to_string(PatientFlag f) {
  switch (f) {
    case PatientFlag::ok: return "ok";
    case PatientFlag::impute: return "impute";
    case PatientFlag::drop: return "drop";
  }
  return "?";
}

ValidationReport validate_cohort(const Cohort& cohort) {
  ValidationReport report;
  for (const auto& p : cohort.patients) {
    ValidationEntry e;
    e.patient_id = p.patient_id;
    Index missing_events = 0;
    for (auto v : p.events) missing_events += (v < 0);
    const Index missing_dyn = p.dynamics.array().isNaN().count();
    if (missing_events > 0) {
      e.flag = PatientFlag::drop;
      e.detail = std::to_string(missing_events) + " missing event label(s)";
    } else if (missing_dyn > 0) {
      e.flag = PatientFlag::impute;
      e.detail = std::to_string(missing_dyn) + " missing dynamic value(s)";
    } else {
      e.flag = PatientFlag::ok;
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

Cohort drop_flagged(const Cohort& cohort, const ValidationReport& report) {
  if (report.entries.size() != cohort.patients.size())
    throw DimensionMismatch("validation report does not match cohort");
  Cohort out;
  out.schema = cohort.schema;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i)
    if (report.entries[i].flag != PatientFlag::drop) out.patients.push_back(cohort.patients[i]);
  return out;
}

}  // namespace riskcast
