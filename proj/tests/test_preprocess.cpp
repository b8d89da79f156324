#include "riskcast/preprocess.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace riskcast;

namespace {

PatientRecord record_with_days(const std::vector<int>& days, Index n_dynamic = 1) {
  PatientRecord rec;
  rec.patient_id = "p";
  rec.days = days;
  rec.events.assign(days.size(), 0);
  rec.dynamics = Matrix::Ones(n_dynamic, static_cast<Index>(days.size()));
  rec.statics = Vector::Zero(1);
  return rec;
}

std::vector<int> consecutive(int count, int start = 0) {
  std::vector<int> days(count);
  std::iota(days.begin(), days.end(), start);
  return days;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("period params invariants") {
  PeriodParams p;
  p.validate();
  p.min_len_days = 9;
  p.boundary_daily_run = 5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = PeriodParams{};
  p.max_mean_gap = 0.9;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("40 consecutive daily entries give one full segment") {
  const auto segs = extract_frequent_periods(record_with_days(consecutive(40)), {});
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].length() == 40);
}

TEST_CASE("29 consecutive daily entries are below the minimum span") {
  CHECK(extract_frequent_periods(record_with_days(consecutive(29)), {}).empty());
}

TEST_CASE("40 entries over 43 days with daily boundaries qualify") {
  // three 2-day gaps in the middle; first and last 5 entries daily
  std::vector<int> days;
  int d = 0;
  for (int i = 0; i < 40; ++i) {
    days.push_back(d);
    const bool gap = i == 9 || i == 19 || i == 29;  // gaps away from the boundaries
    d += gap ? 2 : 1;
  }
  REQUIRE(days.back() - days.front() == 42);  // mean gap 42/39 ~ 1.077 <= 1.1
  const auto segs = extract_frequent_periods(record_with_days(days), {});
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].length() == 40);
}

TEST_CASE("mean gap above 1.1 disqualifies") {
  // 36 entries spanning 41 days: mean gap 40/35 ~ 1.143
  std::vector<int> days;
  int d = 0;
  for (int i = 0; i < 36; ++i) {
    days.push_back(d);
    const bool gap = i >= 9 && i < 14;  // five 2-day gaps
    d += gap ? 2 : 1;
  }
  REQUIRE(days.back() - days.front() == 40);
  const auto full = extract_frequent_periods(record_with_days(days), {});
  // the extractor may still find a shorter qualifying sub-segment; whatever it
  // returns must satisfy all three rules
  for (const auto& seg : full) {
    const double mean_gap =
        double(seg.days.back() - seg.days.front()) / double(seg.length() - 1);
    CHECK(mean_gap <= 1.1);
    CHECK(seg.days.back() - seg.days.front() + 1 >= 30);
  }
}

TEST_CASE("broken boundary run shifts the segment start") {
  // entry 0 then a 3-day gap, then 40 consecutive days
  std::vector<int> days{0};
  for (int i = 0; i < 40; ++i) days.push_back(4 + i);
  const auto segs = extract_frequent_periods(record_with_days(days), {});
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].days.front() == 4);
  CHECK(segs[0].length() == 40);
}

TEST_CASE("segments are non-overlapping and chronological") {
  Rng rng(99);
  std::uniform_int_distribution<int> gap(1, 4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> days;
    int d = 0;
    const int count = 60 + trial;
    for (int i = 0; i < count; ++i) {
      days.push_back(d);
      d += (i % 7 == 3) ? gap(rng) : 1;
    }
    const auto segs = extract_frequent_periods(record_with_days(days), {});
    for (std::size_t k = 1; k < segs.size(); ++k)
      CHECK(segs[k].days.front() > segs[k - 1].days.back());
    for (const auto& seg : segs) {
      REQUIRE(seg.length() >= 2);
      CHECK(seg.days.back() - seg.days.front() + 1 >= 30);
      const double mean_gap =
          double(seg.days.back() - seg.days.front()) / double(seg.length() - 1);
      CHECK(mean_gap <= 1.1 + 1e-12);
      for (int b = 0; b < 4; ++b) {
        CHECK(seg.days[b + 1] - seg.days[b] == 1);
        const Index e = seg.length() - 1 - b;
        CHECK(seg.days[e] - seg.days[e - 1] == 1);
      }
    }
  }
}

TEST_CASE("imputation fills gaps by time-linear interpolation") {
  PatientRecord rec = record_with_days({1, 2, 3});
  rec.dynamics(0, 0) = 1;
  rec.dynamics(0, 1) = std::numeric_limits<double>::quiet_NaN();
  rec.dynamics(0, 2) = 3;
  const ImputationFlags flags = impute_dynamics(rec);
  CHECK(rec.dynamics(0, 1) == doctest::Approx(2.0));
  CHECK(flags.imputed == std::vector<std::uint8_t>{0, 1, 0});
}

TEST_CASE("boundary missing takes the nearest observed value") {
  PatientRecord rec = record_with_days({1, 2, 3});
  rec.dynamics(0, 0) = std::numeric_limits<double>::quiet_NaN();
  rec.dynamics(0, 1) = 4;
  rec.dynamics(0, 2) = 4;
  const ImputationFlags flags = impute_dynamics(rec);
  CHECK(rec.dynamics(0, 0) == 4.0);
  CHECK(flags.imputed == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("multi-day entries are flagged, not imputed") {
  PatientRecord rec = record_with_days({1, 2, 4});
  const ImputationFlags flags = impute_dynamics(rec);
  CHECK(flags.multi_day_entry == std::vector<std::uint8_t>{0, 0, 1});
  CHECK(rec.length() == 3);  // no duplication
}

TEST_CASE("a fully missing feature is an error") {
  PatientRecord rec = record_with_days({1, 2, 3});
  rec.dynamics.row(0).setConstant(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(impute_dynamics(rec), AllMissingFeature);
}

TEST_CASE("imputation never alters observed values") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    PatientRecord rec = record_with_days(consecutive(50), 3);
    for (Index i = 0; i < rec.dynamics.size(); ++i) rec.dynamics.data()[i] = u(rng);
    Matrix original = rec.dynamics;
    std::vector<bool> missing(rec.dynamics.size(), false);
    for (Index i = 0; i < rec.dynamics.size(); ++i)
      if (u(rng) < 0.3 && i % 50 != 0) {  // keep first day observed
        rec.dynamics.data()[i] = std::numeric_limits<double>::quiet_NaN();
        missing[i] = true;
      }
    impute_dynamics(rec);
    for (Index i = 0; i < rec.dynamics.size(); ++i) {
      if (!missing[i]) CHECK(rec.dynamics.data()[i] == original.data()[i]);
      CHECK(std::isfinite(rec.dynamics.data()[i]));
    }
  }
}

TEST_CASE("standardizer hand values") {
  const std::vector<double> two{2, 4};
  const FeatureStats st = fit_feature_stats("f", two);
  CHECK(st.mean == doctest::Approx(3.0));
  CHECK(st.std == doctest::Approx(1.0));  // population convention
  CHECK_FALSE(st.constant);

  const std::vector<double> constant{5, 5, 5};
  const FeatureStats cst = fit_feature_stats("c", constant);
  CHECK(cst.constant);

  CHECK_THROWS_AS(fit_feature_stats("e", std::vector<double>{}), EmptyTraining);
}

TEST_CASE("apply maps x=3 to 0 and x=5 to 2 under mean 3 std 1") {
  Cohort cohort;
  cohort.schema.dynamic = {{"f", FeatureKind::continuous}};
  PatientRecord rec;
  rec.patient_id = "p";
  rec.days = {0, 1};
  rec.events = {0, 1};
  rec.dynamics.resize(1, 2);
  rec.dynamics << 3, 5;
  cohort.patients.push_back(rec);

  StandardizationStats stats;
  stats.dynamic = {{"f", 3.0, 1.0, false, true}};
  const Cohort out = apply_standardizer(cohort, stats);
  CHECK(out.patients[0].dynamics(0, 0) == doctest::Approx(0.0));
  CHECK(out.patients[0].dynamics(0, 1) == doctest::Approx(2.0));

  SUBCASE("constant feature passes through") {
    StandardizationStats cstats;
    cstats.dynamic = {{"f", 4.0, 0.0, true, true}};
    const Cohort kept = apply_standardizer(cohort, cstats);
    CHECK(kept.patients[0].dynamics(0, 0) == 3.0);
    CHECK(kept.patients[0].dynamics(0, 1) == 5.0);
  }
  SUBCASE("mismatched stats are rejected") {
    StandardizationStats bad;
    bad.dynamic = {{"other", 0.0, 1.0, false, true}};
    CHECK_THROWS_AS(apply_standardizer(cohort, bad), UnknownFeature);
  }
}

TEST_CASE("training day count excludes the test tail") {
  CHECK(training_day_count(140, 0.2) == 111);  // rho = 28
  CHECK(training_day_count(31, 0.2) == 24);    // rho = 6
  CHECK(training_day_count(5, 0.2) == 3);
}

TEST_CASE("standardizing the fitted training days recenters them") {
  Rng rng(17);
  std::normal_distribution<double> noise(3.0, 2.5);
  Cohort cohort;
  cohort.schema.dynamic = {{"a", FeatureKind::continuous}, {"b", FeatureKind::continuous}};
  cohort.schema.statics = {{"s", FeatureKind::continuous}};
  for (int p = 0; p < 6; ++p) {
    PatientRecord rec;
    rec.patient_id = "p" + std::to_string(p);
    const Index tp = 40 + 7 * p;
    for (Index t = 0; t < tp; ++t) {
      rec.days.push_back(int(t));
      rec.events.push_back(t % 5 == 0);
    }
    rec.dynamics.resize(2, tp);
    for (Index i = 0; i < rec.dynamics.size(); ++i) rec.dynamics.data()[i] = noise(rng);
    rec.statics.resize(1);
    rec.statics[0] = noise(rng);
    cohort.patients.push_back(std::move(rec));
  }
  const StandardizationStats stats = fit_standardizer(cohort, 0.2);
  const Cohort scaled = apply_standardizer(cohort, stats);
  for (Index f = 0; f < 2; ++f) {
    std::vector<double> train_values;
    for (const auto& p : scaled.patients) {
      const Index n_train = training_day_count(p.length(), 0.2);
      for (Index t = 0; t < n_train; ++t) train_values.push_back(p.dynamics(f, t));
    }
    double mean = 0;
    for (double v : train_values) mean += v;
    mean /= double(train_values.size());
    double ss = 0;
    for (double v : train_values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(train_values.size()));
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-9);
  }
}

TEST_CASE("clean_cohort appends flags and keeps events bit-identical") {
  Cohort cohort;
  cohort.schema.dynamic = {{"f", FeatureKind::continuous}};
  PatientRecord rec;
  rec.patient_id = "p";
  for (int t = 0; t < 45; ++t) {
    rec.days.push_back(t < 20 ? t : t + 1);  // one 2-day gap at t=20
    rec.events.push_back(t % 4 == 0);
  }
  rec.dynamics = Matrix::Ones(1, 45);
  rec.dynamics(0, 7) = std::numeric_limits<double>::quiet_NaN();
  rec.statics = Vector::Zero(0);
  cohort.patients.push_back(rec);

  const CleanResult result = clean_cohort(cohort, {});
  REQUIRE(result.cleaned.patients.size() == 1);
  const auto& seg = result.cleaned.patients[0];
  CHECK(result.cleaned.schema.dynamic.size() == 3);
  CHECK(result.cleaned.schema.dynamic[1].name == kImputedFlagName);
  CHECK(result.cleaned.schema.dynamic[2].name == kMultiDayFlagName);
  // events preserved over the kept range
  for (Index t = 0; t < seg.length(); ++t)
    CHECK(seg.events[t] == rec.events[t]);
  CHECK(seg.dynamics(1, 7) == 1.0);   // imputed flag set
  CHECK(seg.dynamics(2, 20) == 1.0);  // multi-day flag at the gap

  SUBCASE("reserved flag name collision is rejected") {
    Cohort bad = cohort;
    bad.schema.dynamic.push_back({kImputedFlagName, FeatureKind::binary});
    bad.patients[0].dynamics = Matrix::Ones(2, 45);
    CHECK_THROWS_AS(clean_cohort(bad, {}), ConfigError);
  }
}

TEST_CASE("stats serialize and reload") {
  test::TempDir tmp("stats");
  StandardizationStats stats;
  stats.dynamic = {{"a", 1.5, 2.5, false, true}, {"imputed", 0, 1, false, false}};
  stats.statics = {{"s", -3.25, 0.0, true, true}};
  stats.test_fraction = 0.2;
  save_stats(stats, tmp.file("stats.json"));
  const StandardizationStats back = load_stats(tmp.file("stats.json"));
  REQUIRE(back.dynamic.size() == 2);
  CHECK(back.dynamic[0].mean == 1.5);
  CHECK(back.dynamic[1].scaled == false);
  CHECK(back.statics[0].constant == true);
}

}  // TEST_SUITE
