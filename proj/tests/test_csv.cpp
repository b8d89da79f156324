#include "riskcast/csv.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <random>

using namespace riskcast;

TEST_SUITE("csv") {

TEST_CASE("fmt round-trips doubles exactly") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(csv::parse_double(csv::fmt(v), "t") == v);
  }
  CHECK(csv::fmt(1.5) == "1.5");
  CHECK(csv::fmt(0.0) == "0");
}

TEST_CASE("split handles quoting") {
  const auto fields = csv::split_line(R"(a,"b,c",d"")");
  REQUIRE(fields.size() == 3);
  CHECK(fields[0] == "a");
  CHECK(fields[1] == "b,c");
}

TEST_CASE("table write/read round trip") {
  test::TempDir tmp("csv");
  csv::Table t;
  t.header = {"x", "y"};
  t.rows = {{"1", "a,b"}, {"", "q\"q"}};
  csv::write_file(tmp.file("t.csv"), t);
  const csv::Table back = csv::read_file(tmp.file("t.csv"));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(back.col("y") == 1);
  CHECK(back.col("z") == -1);
}

TEST_CASE("parse_double rejects garbage") {
  CHECK_THROWS_AS(csv::parse_double("1.2.3", "ctx"), DataError);
  CHECK_THROWS_AS(csv::parse_double("abc", "ctx"), DataError);
  CHECK_THROWS_AS(csv::parse_double("", "ctx"), DataError);
}

}  // TEST_SUITE
