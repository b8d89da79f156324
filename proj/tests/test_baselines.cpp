#include "riskcast/baselines.hpp"

#include "riskcast/evaluation.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace riskcast;

namespace {

// XOR-of-two-bits labels planted into the event series via direct relabeling
// is not possible (labels come from events), so the nonlinear-rule dataset is
// built on flattened features directly.
FlatDataset xor_dataset(Index n_items, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> bit(0, 1);
  std::normal_distribution<double> noise(0.0, 0.1);
  FlatDataset data;
  data.x.resize(4, n_items);
  data.labels.resize(n_items);
  for (Index j = 0; j < n_items; ++j) {
    const int a = bit(rng), b = bit(rng);
    data.x(0, j) = a + noise(rng);
    data.x(1, j) = b + noise(rng);
    data.x(2, j) = noise(rng);
    data.x(3, j) = noise(rng);
    data.labels[j] = double(a ^ b);
  }
  return data;
}

double ffnn_fd_error(const FlatDataset& data, const FfnnConfig& cfg, const LossWeights& w,
                     const FfnnDropoutPlan* plan) {
  Rng rng(cfg.seed + 1);
  FfnnParams params;
  {
    // small random start away from zero
    std::normal_distribution<double> noise(0.0, 0.4);
    Index in = data.x.rows();
    for (Index h : cfg.hidden_sizes) {
      Matrix wm(h, in);
      for (Index i = 0; i < wm.size(); ++i) wm.data()[i] = noise(rng);
      params.w.push_back(wm);
      Vector b(h);
      for (Index i = 0; i < h; ++i) b[i] = noise(rng);
      params.b.push_back(b);
      in = h;
    }
    params.w_out.resize(in);
    for (Index i = 0; i < in; ++i) params.w_out[i] = noise(rng);
    params.b_out = noise(rng);
  }

  FfnnCache cache;
  ffnn_forward(data.x, params, plan, &cache);
  const FfnnParams grads = ffnn_backward(data.x, data.labels, params, cfg, w, plan, cache);

  auto loss_now = [&] {
    const RowVector preds = ffnn_forward(data.x, params, plan, nullptr);
    return ffnn_loss(preds, data.labels, w, params, cfg.l2);
  };
  const double h = 1e-6;
  double worst = 0;
  auto check_coord = [&](double& coord, double analytic) {
    const double saved = coord;
    coord = saved + h;
    const double up = loss_now();
    coord = saved - h;
    const double down = loss_now();
    coord = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  };
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    for (Index i = 0; i < params.w[l].size(); ++i)
      check_coord(params.w[l].data()[i], grads.w[l].data()[i]);
    for (Index i = 0; i < params.b[l].size(); ++i)
      check_coord(params.b[l].data()[i], grads.b[l].data()[i]);
  }
  for (Index i = 0; i < params.w_out.size(); ++i)
    check_coord(params.w_out.data()[i], grads.w_out.data()[i]);
  check_coord(params.b_out, grads.b_out);
  return worst;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("flattened window lengths") {
  auto store1 = test::make_store(test::random_events(2, 20, 25, 0.3, 1), 3, 2);
  const WindowDataset ds1(store1, 1);
  CHECK(flat_dim(ds1) == 1 + 3 + 2);

  auto store2 = test::make_store(test::random_events(2, 20, 25, 0.3, 2), 2, 3);
  const WindowDataset ds2(store2, 4);
  CHECK(flat_dim(ds2) == 4 * 3 + 3);  // n*(1+|Fd|) + |Fs|
}

TEST_CASE("flatten round-trips through unflatten") {
  auto store = test::make_store(test::random_events(3, 15, 22, 0.4, 3), 2, 2);
  const WindowDataset ds(store, 3);
  for (const auto& ref : ds.windows()) {
    const Vector flat = flatten(ds, ref);
    const auto cols = unflatten(ds, flat);
    const auto& s = ds.series()[ref.series];
    REQUIRE(cols.size() == 3);
    for (Index t = 0; t < 3; ++t) CHECK(cols[t] == s.inputs.col(ref.start + t));
  }
}

TEST_CASE("logistic regression separates a separable toy set") {
  Rng rng(4);
  std::normal_distribution<double> noise(0, 0.2);
  FlatDataset data;
  const Index n = 80;
  data.x.resize(2, n);
  data.labels.resize(n);
  for (Index j = 0; j < n; ++j) {
    const double y = j % 2;
    data.x(0, j) = (y ? 2.0 : -2.0) + noise(rng);
    data.x(1, j) = noise(rng);
    data.labels[j] = y;
  }
  const LogisticModel model = train_logistic(data, 0.0, 200, 0.05, 7);
  const Vector scores = model.score(data.x);
  Index correct = 0;
  for (Index j = 0; j < n; ++j)
    correct += (scores[j] >= 0.5) == (data.labels[j] > 0.5);
  CHECK(correct == n);  // accuracy 1.0 at the 0.5 threshold
}

TEST_CASE("all-positive labels push scores toward one") {
  FlatDataset data;
  data.x = Matrix::Zero(2, 40);
  data.labels = RowVector::Ones(40);
  const LogisticModel model = train_logistic(data, 0.0, 400, 0.05, 1);
  const Vector scores = model.score(data.x);
  for (Index j = 0; j < scores.size(); ++j) CHECK(scores[j] > 0.9);  // bias dominates
}

TEST_CASE("logistic gradient matches finite differences tightly") {
  Rng rng(5);
  std::normal_distribution<double> noise(0, 1);
  FlatDataset data;
  data.x.resize(4, 12);
  data.labels.resize(12);
  for (Index i = 0; i < data.x.size(); ++i) data.x.data()[i] = noise(rng);
  for (Index j = 0; j < 12; ++j) data.labels[j] = j % 3 == 0;
  LogisticModel m;
  m.w resize(4);
  for (Index i = 0; i < 4; ++i) m.w[i] = noise(rng) * 0.3;
  m.b = 0.2;
  const LossWeights w{1.7, 1.1};
  const double l2 = 1e-3;
  const auto [gw, gb] = logistic_grad(m, data.x, data.labels, w, l2);
  const double h = 1e-7;
  double worst = 0;
  for (Index i = 0; i <= 4; ++i) {
    double* coord = i < 4 ? &m.w[i] : &m.b;
    const double analytic = i < 4 ? gw[i] : gb;
    const double saved = *coord;
    *coord = saved + h;
    const double up = logistic_loss(m, data.x, data.labels, w, l2);
    *coord = saved - h;
    const double down = logistic_loss(m, data.x, data.labels, w, l2);
    *coord = saved;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic) /
                                std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("zero hidden layers are rejected") {
  FfnnConfig cfg;
  cfg.hidden_sizes = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.hidden_sizes = {4, 4, 4};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("ffnn gradients match finite differences") {
  const FlatDataset data = xor_dataset(24, 9);
  FfnnConfig cfg;
  cfg.hidden_sizes = {5, 3};
  cfg.l2 = 1e-3;
  cfg.seed = 2;
  CHECK(ffnn_fd_error(data, cfg, {1.4, 0.9}, nullptr) < 1e-4);
}

TEST_CASE("ffnn beats logistic regression on a planted XOR rule") {
  const FlatDataset train = xor_dataset(400, 11);
  const FlatDataset test = xor_dataset(200, 12);

  FfnnConfig cfg;
  cfg.hidden_sizes = {8};
  cfg.epochs = 300;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 64;
  cfg.seed = 3;
  const FfnnModel net = train_ffnn(train, cfg, {1, 1});
  const Vector net_scores = ffnn_predict(net, test.x);

  const LogisticModel lin = train_logistic(train, 0.0, 300, 0.02, 3);
  const Vector lin_scores = lin.score(test.x);

  std::vector<double> labels(test.labels.data(), test.labels.data() + test.labels.size());
  const double net_auc =
      auc_prg(std::span<const double>(net_scores.data(), net_scores.size()), labels);
  const double lin_auc =
      auc_prg(std::span<const double>(lin_scores.data(), lin_scores.size()), labels);
  CHECK(net_auc > lin_auc);
  CHECK(net_auc > 0.9);
}

TEST_CASE("instrument totals on the final window day") {
  // two binary and two 0-2 ordinal components plus one continuous feature
  Cohort cohort;
  cohort.schema.dynamic = {{"c1", FeatureKind::binary},
                           {"c2", FeatureKind::binary},
                           {"v1", FeatureKind::ordinal, 2, true},
                           {"v2", FeatureKind::ordinal, 2, true},
                           {"x", FeatureKind::continuous}};
  PatientRecord rec;
  rec.patient_id = "p";
  for (int t = 0; t < 8; ++t) {
    rec.days.push_back(t);
    rec.events.push_back(t % 2);
  }
  rec.dynamics.resize(5, 8);
  rec.dynamics.setZero();
  rec.dynamics(0, 3) = 1;  // final day of the first 4-day window
  rec.dynamics(1, 3) = 1;
  rec.dynamics(2, 3) = 2;
  rec.dynamics(3, 3) = 2;
  rec.dynamics(4, 3) = 99;  // not a component
  rec.statics.resize(0);
  cohort.patients.push_back(rec);

  // deliberately non-identity stats: the instrument must read raw values
  StandardizationStats stats = test::identity_stats(cohort.schema);
  for (auto& st : stats.dynamic) {
    st.scaled = true;
    st.mean = 5;
    st.std = 3;
  }
  auto store = build_series(cohort, stats);
  const WindowDataset ds(store, 4);

  PsychometricSpec both{"both", {"c1", "c2", "v1", "v2"}, 0.0, 6.0};
  both.validate(ds.schema());
  const Vector scores = psychometric_scores(ds, ds.windows(), both);
  CHECK(scores[0] == 6.0);  // 1+1+2+2 on day 3
  CHECK(scores[1] == 0.0);  // day 4 is all zeros

  SUBCASE("component range accounting") {
    PsychometricSpec bad = both;
    bad.max_total = 40;
    CHECK_THROWS_AS(bad.validate(ds.schema()), ConfigError);
    PsychometricSpec missing{"m", {"c1", "nope"}, 0, 2};
    CHECK_THROWS_AS(missing.validate(ds.schema()), MissingComponent);
    PsychometricSpec continuous{"c", {"x"}, 0, 1};
    CHECK_THROWS_AS(continuous.validate(ds.schema()), ConfigError);
  }
}

TEST_CASE("external scores align by series and label index") {
  test::TempDir tmp("ext");
  auto store = test::make_store(test::random_events(2, 25, 30, 0.3, 6), 1, 1);
  const WindowDataset ds(store, 2);
  const SplitWindows split = split_train_test(ds, 0.2);

  auto write_scores = [&](const std::string& name, bool drop_one, bool add_extra,
                          bool duplicate) {
    csv::Table t;
    t.header = {"patient_id", "label_index", "score"};
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      if (drop_one && i == 0) continue;
      const auto& ref = split.test[i];
      t.rows.push_back({ds.series()[ref.series].series_id,
                        std::to_string(ds.label_pos(ref) + 1), "0.5"});
    }
    if (add_extra) t.rows.push_back({"ghost", "7", "0.1"});
    if (duplicate) t.rows.push_back(t.rows.front());
    csv::write_file(tmp.file(name), t);
    return tmp.file(name);
  };

  const Vector ok = load_external_scores(write_scores("ok.csv", false, false, false), ds,
                                         split.test);
  CHECK(ok.size() == static_cast<Index>(split.test.size()));
  CHECK_THROWS_AS(
      load_external_scores(write_scores("miss.csv", true, false, false), ds, split.test),
      AlignmentError);
  CHECK_THROWS_AS(
      load_external_scores(write_scores("extra.csv", false, true, false), ds, split.test),
      AlignmentError);
  CHECK_THROWS_AS(
      load_external_scores(write_scores("dup.csv", false, false, true), ds, split.test),
      DuplicateKey);
}

TEST_CASE("checkpoints round trip") {
  test::TempDir tmp("ckpt");
  const FlatDataset train = xor_dataset(60, 21);
  FfnnConfig cfg;
  cfg.hidden_sizes = {4};
  cfg.epochs = 5;
  cfg.learning_rate = 0.01;
  cfg.seed = 5;
  const FfnnModel net = train_ffnn(train, cfg, {1.5, 1.0});
  save_ffnn(net, tmp.file("net.json"));
  const FfnnModel net2 = load_ffnn(tmp.file("net.json"));
  CHECK(ffnn_predict(net, train.x) == ffnn_predict(net2, train.x));

  const LogisticModel lin = train_logistic(train, 1e-4, 5, 0.01, 6);
  save_logistic(lin, tmp.file("lin.json"));
  const LogisticModel lin2 = load_logistic(tmp.file("lin.json"));
  CHECK(lin.score(train.x) == lin2.score(train.x));

  CHECK_THROWS_AS(load_ffnn(tmp.file("lin.json")), DataError);
}

}  // TEST_SUITE
