#include "riskcast/windowing.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace riskcast;

namespace {

// naive oracle: enumerate expected (start, label) pairs straight from a series
std::vector<std::pair<Index, int>> naive_windows(const std::vector<std::uint8_t>& events,
                                                 Index n) {
  std::vector<std::pair<Index, int>> out;
  const Index tp = static_cast<Index>(events.size());
  for (Index w = 0; w + n < tp; ++w) out.emplace_back(w, events[w + n]);
  return out;
}

std::vector<std::uint8_t> bits(std::initializer_list<int> v) {
  std::vector<std::uint8_t> out;
  for (int b : v) out.push_back(std::uint8_t(b));
  return out;
}

}  // namespace

TEST_SUITE("windowing") {

TEST_CASE("Tp=10 n=4 yields six windows labelled y5..y10") {
  auto store = test::make_store({bits({0, 1, 0, 0, 1, 1, 0, 1, 0, 1})});
  const WindowDataset ds(store, 4);
  REQUIRE(ds.windows().size() == 6);
  const auto expect = naive_windows(store->series[0].events, 4);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(ds.windows()[i].start == expect[i].first);
    CHECK(ds.label(ds.windows()[i]) == expect[i].second);
    CHECK(ds.label_pos(ds.windows()[i]) == expect[i].first + 4);
  }
}

TEST_CASE("Tp equal to n yields no windows") {
  auto store = test::make_store({bits({0, 1, 0, 1})});
  const WindowDataset ds(store, 4);
  CHECK(ds.windows().empty());
}

TEST_CASE("Tp=140 n=10 yields 130 windows and a 28/102 split") {
  auto store = test::make_store({std::vector<std::uint8_t>(140, 0)});
  const WindowDataset ds(store, 10);
  CHECK(ds.windows().size() == 130);
  const SplitWindows split = split_train_test(ds, 0.2);
  CHECK(split.rho[0] == 28);
  CHECK(split.test.size() == 28);
  CHECK(split.train.size() == 102);
}

TEST_CASE("test labels for Tp=31 are the last six, for any valid n") {
  auto events = test::random_events(1, 31, 31, 0.3, 3)[0];
  auto store = test::make_store({events});
  for (Index n : {1, 5, 10, 25}) {
    const WindowDataset ds(store, n);
    const SplitWindows split = split_train_test(ds, 0.2);
    REQUIRE(split.rho[0] == 6);
    std::set<Index> label_pos;
    for (const auto& ref : split.test) label_pos.insert(ds.label_pos(ref));
    CHECK(label_pos == std::set<Index>{25, 26, 27, 28, 29, 30});
  }
}

TEST_CASE("insufficient history is an error") {
  auto store = test::make_store({std::vector<std::uint8_t>(10, 0)});
  const WindowDataset ds(store, 9);  // one window, rho = 2
  CHECK_THROWS_AS(split_train_test(ds, 0.2), InsufficientHistory);
}

TEST_CASE("expanding folds: 20 train windows split 4,4,3,3,3,3") {
  auto store = test::make_store({std::vector<std::uint8_t>(30, 0)});
  const WindowDataset ds(store, 4);  // 26 windows, rho=6 -> 20 train
  const SplitWindows split = split_train_test(ds, 0.2);
  REQUIRE(split.train.size() == 20);
  const CvFolds folds = build_cv_folds(ds, split.train, 5);
  REQUIRE(folds.folds.size() == 5);
  CHECK(folds.folds[0].train.size() == 4);
  CHECK(folds.folds[0].validation.size() == 4);
  CHECK(folds.folds[1].train.size() == 8);
  CHECK(folds.folds[1].validation.size() == 3);
  CHECK(folds.folds[4].train.size() == 17);
  CHECK(folds.folds[4].validation.size() == 3);
  CHECK(folds.excluded_series.empty());
}

TEST_CASE("six training windows make single-window pools") {
  std::vector<WindowRef> train;
  auto store = test::make_store({std::vector<std::uint8_t>(30, 0)});
  const WindowDataset ds(store, 4);
  for (Index w = 0; w < 6; ++w) train.push_back({0, w});
  const CvFolds folds = build_cv_folds(ds, train, 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(folds.folds[i].train.size() == std::size_t(i + 1));
    CHECK(folds.folds[i].validation.size() == 1);
  }
}

TEST_CASE("five training windows exclude the series from CV") {
  auto store = test::make_store({std::vector<std::uint8_t>(30, 0)});
  const WindowDataset ds(store, 4);
  std::vector<WindowRef> train;
  for (Index w = 0; w < 5; ++w) train.push_back({0, w});
  const CvFolds folds = build_cv_folds(ds, train, 5);
  CHECK(folds.excluded_series == std::vector<std::string>{"p0"});
  for (const auto& fold : folds.folds) CHECK(fold.train.empty());
}

TEST_CASE("property: test label multiset is identical across window lengths") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto events = test::random_events(9, 30, 90, 0.2, seed);
    auto store = test::make_store(events);
    std::vector<std::vector<std::pair<std::string, Index>>> keysets;
    for (Index n : {1, 5, 10, 20}) {
      const WindowDataset ds(store, n);
      const SplitWindows split = split_train_test(ds, 0.2);
      auto keys = label_keys(ds, split.test);
      std::sort(keys.begin(), keys.end());
      keysets.push_back(std::move(keys));
    }
    for (std::size_t i = 1; i < keysets.size(); ++i) CHECK(keysets[i] == keysets[0]);
  }
}

TEST_CASE("property: temporal integrity of split and folds") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    auto events = test::random_events(8, 32, 100, 0.25, seed);
    auto store = test::make_store(events);
    const WindowDataset ds(store, 7);
    const SplitWindows split = split_train_test(ds, 0.2);

    // bookkeeping: every window lands in exactly one side
    Index expected = 0;
    for (const auto& s : ds.series()) expected += s.length() - 7;
    CHECK(Index(split.train.size() + split.test.size()) == expected);

    std::set<std::pair<Index, Index>> train_keys, test_keys;
    for (const auto& ref : split.train) train_keys.insert({ref.series, ds.label_pos(ref)});
    for (const auto& ref : split.test) test_keys.insert({ref.series, ds.label_pos(ref)});
    for (const auto& key : test_keys) CHECK(train_keys.count(key) == 0);

    // per series: every train label index < every test label index
    std::map<Index, Index> max_train, min_test;
    for (const auto& ref : split.train) {
      auto [it, ok] = max_train.emplace(ref.series, ds.label_pos(ref));
      if (!ok) it->second = std::max(it->second, ds.label_pos(ref));
    }
    for (const auto& ref : split.test) {
      auto [it, ok] = min_test.emplace(ref.series, ds.label_pos(ref));
      if (!ok) it->second = std::min(it->second, ds.label_pos(ref));
    }
    for (const auto& [series, hi] : max_train)
      if (min_test.count(series)) CHECK(hi < min_test.at(series));

    const CvFolds folds = build_cv_folds(ds, split.train, 5);
    for (const auto& fold : folds.folds) {
      std::map<Index, Index> fold_max_train;
      for (const auto& ref : fold.train) {
        auto [it, ok] = fold_max_train.emplace(ref.series, ds.label_pos(ref));
        if (!ok) it->second = std::max(it->second, ds.label_pos(ref));
      }
      std::set<std::pair<Index, Index>> fold_train_keys;
      for (const auto& ref : fold.train) fold_train_keys.insert({ref.series, ds.label_pos(ref)});
      for (const auto& ref : fold.validation) {
        CHECK(fold_train_keys.count({ref.series, ds.label_pos(ref)}) == 0);
        if (fold_max_train.count(ref.series))
          CHECK(fold_max_train.at(ref.series) < ds.label_pos(ref));
      }
    }
  }
}

TEST_CASE("property: labels match naive re-extraction") {
  auto events = test::random_events(5, 30, 60, 0.4, 77);
  auto store = test::make_store(events);
  for (Index n : {1, 3, 9}) {
    const WindowDataset ds(store, n);
    std::map<Index, std::vector<std::pair<Index, int>>> by_series;
    for (const auto& ref : ds.windows())
      by_series[ref.series].emplace_back(ref.start, ds.label(ref));
    for (Index s = 0; s < static_cast<Index>(events.size()); ++s)
      CHECK(by_series[s] == naive_windows(events[s], n));
  }
}

TEST_CASE("batch assembly concatenates event, dynamics, statics per step") {
  auto store = test::make_store({bits({1, 0, 1, 0, 1, 1})}, 2, 2);
  const WindowDataset ds(store, 3);
  const auto& s = ds.series()[0];
  const Batch batch = assemble_batch(ds, ds.windows());
  REQUIRE(batch.x.size() == 3);
  REQUIRE(batch.size() == 3);  // Tp - n = 3 windows
  CHECK(ds.input_dim() == 1 + 2 + 2);
  for (Index j = 0; j < batch.size(); ++j) {
    const auto& ref = ds.windows()[j];
    for (Index t = 0; t < 3; ++t) {
      CHECK(batch.x[t](0, j) == double(s.events[ref.start + t]));
      CHECK(batch.x[t].col(j) == s.inputs.col(ref.start + t));
    }
    CHECK(batch.labels[j] == double(s.events[ref.start + 3]));
  }
}

TEST_CASE("window dump uses 1-based indices") {
  test::TempDir tmp("windows");
  auto store = test::make_store({bits({0, 1, 0, 0, 1})});
  const WindowDataset ds(store, 2);
  save_window_dump(ds, ds.windows(), tmp.file("w.csv"));
  const auto text = test::read_file(tmp.file("w.csv"));
  CHECK(text.find("patient_id,w,n,label_index,label") == 0);
  CHECK(text.find("p0,1,2,3,0") != std::string::npos);
  CHECK(text.find("p0,3,2,5,1") != std::string::npos);
}

}  // TEST_SUITE
