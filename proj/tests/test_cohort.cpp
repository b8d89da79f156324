#include "riskcast/cohort.hpp"

#include "riskcast/synthgen.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <fstream>

using namespace riskcast;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

FeatureSchema two_feature_schema() {
  FeatureSchema s;
  s.dynamic = {{"mood", FeatureKind::ordinal, 3, false}, {"hr", FeatureKind::continuous}};
  s.statics = {{"age", FeatureKind::continuous}, {"flag", FeatureKind::binary}};
  return s;
}

}  // namespace

TEST_SUITE("cohort") {

TEST_CASE("dates parse and format") {
  CHECK(parse_iso_date("1970-01-01") == 0);
  CHECK(parse_iso_date("1970-01-31") == 30);
  CHECK(format_iso_date(parse_iso_date("2021-02-28")) == "2021-02-28");
  CHECK(parse_iso_date("2020-03-01") - parse_iso_date("2020-02-28") == 2);  // leap year
  CHECK_THROWS_AS(parse_iso_date("2020-13-01"), MalformedRow);
  CHECK_THROWS_AS(parse_iso_date("2020-02-30"), MalformedRow);
  CHECK_THROWS_AS(parse_iso_date("20200101"), MalformedRow);
}

TEST_CASE("schema invariants") {
  FeatureSchema s = two_feature_schema();
  s.validate();
  SUBCASE("duplicate name") {
    s.statics.push_back({"mood", FeatureKind::binary});
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("event is reserved") {
    s.dynamic.push_back({"event", FeatureKind::binary});
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("ordinal needs s_max") {
    s.dynamic.push_back({"bad", FeatureKind::ordinal, 0, false});
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("minimal well-formed load") {
  test::TempDir tmp("cohort");
  write_text(tmp.file("e.csv"),
             "patient_id,date,event,mood,hr\n"
             "a,2020-01-01,0,1,72\n"
             "a,2020-01-02,1,2,80\n"
             "a,2020-01-03,0,3,70\n"
             "b,2020-01-03,0,1,60\n"
             "b,2020-01-01,1,1,61\n"  // out of order on purpose
             "b,2020-01-02,0,2,62\n");
  write_text(tmp.file("s.csv"), "patient_id,age,flag\na,30,1\nb,41,0\n");
  const Cohort c = load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema());
  REQUIRE(c.patients.size() == 2);
  CHECK(c.patients[0].patient_id == "a");
  CHECK(c.patients[0].length() == 3);
  CHECK(c.patients[1].length() == 3);
  // rows were sorted by date
  CHECK(c.patients[1].events[0] == 1);
  CHECK(c.patients[1].dynamics(1, 2) == 60.0);
  CHECK(c.patients[0].statics[0] == 30.0);
  // per-patient lengths agree across all series
  for (const auto& p : c.patients) {
    CHECK(p.dynamics.cols() == p.length());
    CHECK(static_cast<Index>(p.events.size()) == p.length());
  }
}

TEST_CASE("malformed rows are rejected") {
  test::TempDir tmp("cohort");
  write_text(tmp.file("s.csv"), "patient_id,age,flag\na,30,1\n");
  SUBCASE("event out of domain") {
    write_text(tmp.file("e.csv"), "patient_id,date,event,mood,hr\na,2020-01-01,2,1,72\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    MalformedRow);
  }
  SUBCASE("ordinal out of range") {
    write_text(tmp.file("e.csv"), "patient_id,date,event,mood,hr\na,2020-01-01,0,4,72\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    MalformedRow);
  }
  SUBCASE("ordinal zero only if zero_based") {
    write_text(tmp.file("e.csv"), "patient_id,date,event,mood,hr\na,2020-01-01,0,0,72\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    MalformedRow);
  }
  SUBCASE("duplicate day") {
    write_text(tmp.file("e.csv"),
               "patient_id,date,event,mood,hr\n"
               "a,2020-01-01,0,1,72\na,2020-01-02,0,1,72\na,2020-01-02,1,2,73\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    DuplicateDay);
  }
  SUBCASE("unknown column") {
    write_text(tmp.file("e.csv"), "patient_id,date,event,mood,hr,extra\na,2020-01-01,0,1,72,9\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    UnknownColumn);
  }
  SUBCASE("schema feature missing from file") {
    write_text(tmp.file("e.csv"), "patient_id,date,event,mood\na,2020-01-01,0,1\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    UnknownColumn);
  }
  SUBCASE("missing statics row") {
    write_text(tmp.file("e.csv"),
               "patient_id,date,event,mood,hr\na,2020-01-01,0,1,72\nzz,2020-01-01,0,1,72\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema()),
                    MissingStatic);
  }
  SUBCASE("missing static value") {
    write_text(tmp.file("e.csv"), "patient_id,date,event,mood,hr\na,2020-01-01,0,1,72\n");
    write_text(tmp.file("s2.csv"), "patient_id,age,flag\na,,1\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("s2.csv"), two_feature_schema()),
                    MalformedRow);
  }
}

TEST_CASE("validation flags") {
  test::TempDir tmp("cohort");
  write_text(tmp.file("e.csv"),
             "patient_id,date,event,mood,hr\n"
             "drops,2020-01-01,0,1,72\n"
             "drops,2020-01-02,,1,72\n"   // event gap
             "imputes,2020-01-01,0,,72\n" // dynamic gap
             "imputes,2020-01-02,1,2,\n"
             "clean,2020-01-01,1,1,70\n");
  write_text(tmp.file("s.csv"), "patient_id,age,flag\nclean,1,0\ndrops,2,0\nimputes,3,1\n");
  const Cohort c = load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), two_feature_schema());
  const ValidationReport report = validate_cohort(c);
  REQUIRE(report.entries.size() == 3);
  auto flag_of = [&](const std::string& id) {
    for (const auto& e : report.entries)
      if (e.patient_id == id) return e.flag;
    FAIL("missing patient");
    return PatientFlag::ok;
  };
  CHECK(flag_of("drops") == PatientFlag::drop);
  CHECK(flag_of("imputes") == PatientFlag::impute);
  CHECK(flag_of("clean") == PatientFlag::ok);
  CHECK(report.count(PatientFlag::drop) == 1);

  // report-only: input unchanged
  const Cohort before = c;
  validate_cohort(c);
  CHECK(test::cohorts_equal(before, c));

  const Cohort kept = drop_flagged(c, report);
  CHECK(kept.patients.size() == 2);
}

TEST_CASE("load-serialize-load round trip on a synthetic cohort") {
  SynthConfig cfg;
  cfg.n_patients = 8;
  cfg.length_mean = 45;
  cfg.length_sd = 12;
  cfg.length_min = 30;
  cfg.length_max = 80;
  cfg.n_binary_components = 2;
  cfg.n_ordinal_components = 2;
  cfg.n_continuous_views = 2;
  cfg.n_distractors = 1;
  cfg.n_static = 4;
  cfg.state_weight = 0.8;
  cfg.missing_dynamic_rate = 0.05;
  cfg.missing_event_patient_rate = 0.3;
  cfg.day_skip_rate = 0.05;
  cfg.seed = 11;
  const SynthResult synth = generate_cohort(cfg);

  test::TempDir tmp("roundtrip");
  save_cohort(synth.cohort, tmp.file("e.csv"), tmp.file("s.csv"));
  save_schema(synth.cohort.schema, tmp.file("schema.json"));
  const FeatureSchema schema = load_schema(tmp.file("schema.json"));
  const Cohort back = load_cohort(tmp.file("e.csv"), tmp.file("s.csv"), schema);
  CHECK(test::cohorts_equal(synth.cohort, back));

  // serialize again: byte-identical files
  save_cohort(back, tmp.file("e2.csv"), tmp.file("s2.csv"));
  CHECK(test::read_file(tmp.file("e.csv")) == test::read_file(tmp.file("e2.csv")));
  CHECK(test::read_file(tmp.file("s.csv")) == test::read_file(tmp.file("s2.csv")));
}

}  // TEST_SUITE
