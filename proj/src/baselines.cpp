#include "riskcast/baselines.hpp"

#include "riskcast/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace riskcast {

Index flat_dim(const WindowDataset& ds) {
  const Index fd = static_cast<Index>(ds.schema().dynamic.size());
  const Index fs = static_cast<Index>(ds.schema().statics.size());
  return ds.n() * (1 + fd) + fs;
}

Vector flatten(const WindowDataset& ds, const WindowRef& ref) {
  const auto& s = ds.series()[ref.series];
  const Index n = ds.n();
  const Index fd = static_cast<Index>(ds.schema().dynamic.size());
  const Index fs = static_cast<Index>(ds.schema().statics.size());
  Vector out(flat_dim(ds));
  for (Index t = 0; t < n; ++t) out[t] = s.inputs(0, ref.start + t);
  for (Index t = 0; t < n; ++t)
    out.segment(n + t * fd, fd) = s.inputs.col(ref.start + t).segment(1, fd);
  out.tail(fs) = s.inputs.col(ref.start).tail(fs);
  return out;
}

std::vector<Vector> unflatten(const WindowDataset& ds, const Vector& flat) {
  const Index n = ds.n();
  const Index fd = static_cast<Index>(ds.schema().dynamic.size());
  const Index fs = static_cast<Index>(ds.schema().statics.size());
  if (flat.size() != flat_dim(ds)) throw DimensionMismatch("flattened window length mismatch");
  std::vector<Vector> cols(n);
  for (Index t = 0; t < n; ++t) {
    Vector x(1 + fd + fs);
    x[0] = flat[t];
    x.segment(1, fd) = flat.segment(n + t * fd, fd);
    x.tail(fs) = flat.tail(fs);
    cols[t] = std::move(x);
  }
  return cols;
}

FlatDataset flatten_all(const WindowDataset& ds, std::span<const WindowRef> refs) {
  FlatDataset out;
  out.x.resize(flat_dim(ds), static_cast<Index>(refs.size()));
  out.labels.resize(static_cast<Index>(refs.size()));
  for (Index j = 0; j < static_cast<Index>(refs.size()); ++j) {
    out.x.col(j) = flatten(ds, refs[j]);
    out.labels[j] = ds.label(refs[j]);
  }
  return out;
}

Vector LogisticModel::score(const Matrix& x) const {
  if (x.rows() != w.size()) throw DimensionMismatch("logistic input dim mismatch");
  return sigmoid(((w.transpose() * x).array() + b)).matrix().transpose();
}

double logistic_loss(const LogisticModel& m, const Matrix& x, const RowVector& labels,
                     const LossWeights& weights, double l2) {
  const Index n = x.cols();
  if (n == 0) throw EmptyBatch("logistic_loss of empty batch");
  const RowVector logits = (m.w.transpose() * x).array() + m.b;
  double sum = 0;
  for (Index j = 0; j < n; ++j) {
    const double y = labels[j];
    const double p = std::clamp(sigmoid(logits[j]), kPredClip, 1.0 - kPredClip);
    sum += -y * std::log(p) * weights.positive - (1.0 - y) * std::log(1.0 - p) * weights.negative;
  }
  return sum / double(n) + 0.5 * l2 * m.w.squaredNorm();
}

std::pair<Vector, double> logistic_grad(const LogisticModel& m, const Matrix& x,
                                        const RowVector& labels, const LossWeights& weights,
                                        double l2) {
  const Index n = x.cols();
  if (n == 0) throw EmptyBatch("logistic_grad of empty batch");
  const RowVector logits = (m.w.transpose() * x).array() + m.b;
  RowVector dlogit(n);
  for (Index j = 0; j < n; ++j) {
    const double y = labels[j];
    const double p = sigmoid(logits[j]);
    if (p <= kPredClip || p >= 1.0 - kPredClip) {
      dlogit[j] = 0.0;
    } else {
      dlogit[j] = (-y * weights.positive * (1.0 - p) + (1.0 - y) * weights.negative * p) /
                  double(n);
    }
  }
  Vector gw = x * dlogit.transpose() + l2 * m.w;
  return {std::move(gw), dlogit.sum()};
}

LogisticModel train_logistic(const FlatDataset& train, double l2, int epochs, double lr,
                             std::uint64_t seed, LossWeights weights, Index batch_size) {
  const Index n = train.x.cols();
  if (n == 0) throw EmptyTraining("no training windows for logistic regression");
  if (epochs < 0 || lr <= 0 || l2 < 0 || batch_size < 1)
    throw ConfigError("bad logistic training parameters");

  LogisticModel model;
  model.w = Vector::Zero(train.x.rows());
  model.b = 0.0;

  Rng rng(seed);
  Vector mw = Vector::Zero(model.w.size()), vw = Vector::Zero(model.w.size());
  double mb = 0, vb = 0;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index(0));
  Matrix xb;
  RowVector yb;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index pos = 0; pos < n; pos += batch_size) {
      const Index count = std::min<Index>(batch_size, n - pos);
      xb.resize(train.x.rows(), count);
      yb.resize(count);
      for (Index j = 0; j < count; ++j) {
        xb.col(j) = train.x.col(order[pos + j]);
        yb[j] = train.labels[order[pos + j]];
      }
      auto [gw, gb] = logistic_grad(model, xb, yb, weights, l2);
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, double(step));
      const double bc2 = 1.0 - std::pow(beta2, double(step));
      mw.array() = beta1 * mw.array() + (1 - beta1) * gw.array();
      vw.array() = beta2 * vw.array() + (1 - beta2) * gw.array().square();
      model.w.array() -= lr * (mw.array() / bc1) / ((vw.array() / bc2).sqrt() + eps);
      mb = beta1 * mb + (1 - beta1) * gb;
      vb = beta2 * vb + (1 - beta2) * gb * gb;
      model.b -= lr * (mb / bc1) / (std::sqrt(vb / bc2) + eps);
    }
  }
  return model;
}

void FfnnConfig::validate() const {
  if (hidden_sizes.empty())
    throw ConfigError("feed-forward net needs at least one hidden layer (use logistic "
                      "regression for zero)");
  if (hidden_sizes.size() > 2) throw ConfigError("feed-forward net supports 1-2 hidden layers");
  for (Index h : hidden_sizes)
    if (h < 1) throw ConfigError("hidden layer size must be >= 1");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout rate must be in [0,1)");
  if (l2 < 0) throw ConfigError("l2 must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
}

FfnnDropoutPlan make_ffnn_dropout_plan(const FfnnConfig& config, Index batch, Rng& rng) {
  FfnnDropoutPlan plan;
  plan.rate = config.dropout;
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (Index h : config.hidden_sizes) {
    Matrix mask(h, batch);
    for (Index i = 0; i < mask.size(); ++i)
      mask.data()[i] = dist(rng) < plan.rate ? 0.0 : 1.0;
    plan.masks.push_back(std::move(mask));
  }
  return plan;
}

RowVector ffnn_forward(const Matrix& x, const FfnnParams& params,
                       const FfnnDropoutPlan* dropout, FfnnCache* cache) {
  if (x.cols() == 0) throw EmptyBatch("ffnn_forward of empty batch");
  const double keep = 1.0 - (dropout ? dropout->rate : 0.0);
  FfnnCache local;
  FfnnCache& c = cache ? *cache : local;
  c.act.clear();
  c.act_drop.clear();
  const Matrix* in = &x;
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    Matrix z = params.w[l] * *in;
    z.colwise() += params.b[l];
    c.act.push_back(z.array().tanh().matrix());
    if (dropout)
      c.act_drop.push_back((c.act.back().array() * dropout->masks[l].array() / keep).matrix());
    else
      c.act_drop.push_back(c.act.back());
    in = &c.act_drop.back();
  }
  RowVector logits = params.w_out * *in;
  logits.array() += params.b_out;
  c.preds = sigmoid(logits.array()).matrix();
  return c.preds;
}

double ffnn_loss(const RowVector& preds, const RowVector& labels, const LossWeights& weights,
                 const FfnnParams& params, double l2) {
  const Index n = preds.size();
  if (n == 0) throw EmptyBatch("ffnn_loss of empty batch");
  double sum = 0;
  for (Index j = 0; j < n; ++j) {
    const double y = labels[j];
    const double p = std::clamp(preds[j], kPredClip, 1.0 - kPredClip);
    sum += -y * std::log(p) * weights.positive - (1.0 - y) * std::log(1.0 - p) * weights.negative;
  }
  double reg = 0;
  if (l2 > 0) {
    for (const auto& w : params.w) reg += w.squaredNorm();
    reg += params.w_out.squaredNorm();
    reg *= 0.5 * l2;
  }
  return sum / double(n) + reg;
}

FfnnParams ffnn_backward(const Matrix& x, const RowVector& labels, const FfnnParams& params,
                         const FfnnConfig& config, const LossWeights& weights,
                         const FfnnDropoutPlan* dropout, const FfnnCache& cache) {
  const Index n = x.cols();
  const double keep = 1.0 - (dropout ? dropout->rate : 0.0);
  FfnnParams grads;
  grads.w.resize(params.w.size());
  grads.b.resize(params.b.size());

  RowVector dlogit(n);
  for (Index j = 0; j < n; ++j) {
    const double y = labels[j];
    const double p = cache.preds[j];
    if (p <= kPredClip || p >= 1.0 - kPredClip)
      dlogit[j] = 0.0;
    else
      dlogit[j] =
          (-y * weights.positive * (1.0 - p) + (1.0 - y) * weights.negative * p) / double(n);
  }

  const Matrix& top = cache.act_drop.back();
  grads.w_out = dlogit * top.transpose();
  grads.b_out = dlogit.sum();

  Matrix dact_drop = params.w_out.transpose() * dlogit;  // h x n
  for (int l = static_cast<int>(params.w.size()) - 1; l >= 0; --l) {
    Matrix dact = dropout
                      ? (dact_drop.array() * dropout->masks[l].array() / keep).matrix()
                      : dact_drop;
    const Matrix dz = (dact.array() * (1.0 - cache.act[l].array().square())).matrix();
    const Matrix& in = l == 0 ? x : cache.act_drop[l - 1];
    grads.w[l] = dz * in.transpose();
    grads.b[l] = dz.rowwise().sum();
    if (l > 0) dact_drop = params.w[l].transpose() * dz;
  }

  if (config.l2 > 0) {
    for (std::size_t l = 0; l < params.w.size(); ++l) grads.w[l] += config.l2 * params.w[l];
    grads.w_out += config.l2 * params.w_out;
  }
  return grads;
}

namespace {

FfnnParams init_ffnn(const FfnnConfig& config, Index input_dim, Rng& rng) {
  FfnnParams p;
  Index in = input_dim;
  for (Index h : config.hidden_sizes) {
    Matrix w(h, in);
    const double limit = std::sqrt(3.0 / double(in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    p.w.push_back(std::move(w));
    p.b.push_back(Vector::Zero(h));
    in = h;
  }
  p.w_out.resize(in);
  const double limit = std::sqrt(3.0 / double(in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < in; ++i) p.w_out[i] = dist(rng);
  p.b_out = 0.0;
  return p;
}

struct FlatAdam {
  std::vector<Matrix> mw, vw;
  std::vector<Vector> mb, vb;
  RowVector mout, vout;
  double mb_out = 0, vb_out = 0;
  long step = 0;
};

void ffnn_adam_step(FfnnParams& p, const FfnnParams& g, FlatAdam& s, double lr) {
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++s.step;
  const double bc1 = 1.0 - std::pow(beta1, double(s.step));
  const double bc2 = 1.0 - std::pow(beta2, double(s.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m.array() = beta1 * m.array() + (1 - beta1) * grad.array();
    v.array() = beta2 * v.array() + (1 - beta2) * grad.array().square();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    update(p.w[l], g.w[l], s.mw[l], s.vw[l]);
    update(p.b[l], g.b[l], s.mb[l], s.vb[l]);
  }
  update(p.w_out, g.w_out, s.mout, s.vout);
  s.mb_out = beta1 * s.mb_out + (1 - beta1) * g.b_out;
  s.vb_out = beta2 * s.vb_out + (1 - beta2) * g.b_out * g.b_out;
  p.b_out -= lr * (s.mb_out / bc1) / (std::sqrt(s.vb_out / bc2) + eps);
}

}  // namespace

FfnnModel train_ffnn(const FlatDataset& train, const FfnnConfig& config,
                     const LossWeights& weights) {
  config.validate();
  const Index n = train.x.cols();
  if (n == 0) throw EmptyTraining("no training windows for feed-forward net");

  FfnnModel model;
  model.config = config;
  model.input_dim = train.x.rows();
  model.weights = weights;
  Rng rng(config.seed);
  model.params = init_ffnn(config, model.input_dim, rng);

  FlatAdam adam;
  for (std::size_t l = 0; l < model.params.w.size(); ++l) {
    adam.mw.push_back(Matrix::Zero(model.params.w[l].rows(), model.params.w[l].cols()));
    adam.vw.push_back(Matrix::Zero(model.params.w[l].rows(), model.params.w[l].cols()));
    adam.mb.push_back(Vector::Zero(model.params.b[l].size()));
    adam.vb.push_back(Vector::Zero(model.params.b[l].size()));
  }
  adam.mout = RowVector::Zero(model.params.w_out.size());
  adam.vout = RowVector::Zero(model.params.w_out.size());

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index(0));
  Matrix xb;
  RowVector yb;
  FfnnCache cache;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index pos = 0; pos < n; pos += config.batch_size) {
      const Index count = std::min<Index>(config.batch_size, n - pos);
      xb.resize(train.x.rows(), count);
      yb.resize(count);
      for (Index j = 0; j < count; ++j) {
        xb.col(j) = train.x.col(order[pos + j]);
        yb[j] = train.labels[order[pos + j]];
      }
      if (config.dropout > 0) {
        FfnnDropoutPlan plan = make_ffnn_dropout_plan(config, count, rng);
        ffnn_forward(xb, model.params, &plan, &cache);
        FfnnParams grads =
            ffnn_backward(xb, yb, model.params, config, weights, &plan, cache);
        ffnn_adam_step(model.params, grads, adam, config.learning_rate);
      } else {
        ffnn_forward(xb, model.params, nullptr, &cache);
        FfnnParams grads =
            ffnn_backward(xb, yb, model.params, config, weights, nullptr, cache);
        ffnn_adam_step(model.params, grads, adam, config.learning_rate);
      }
    }
  }
  return model;
}

Vector ffnn_predict(const FfnnModel& model, const Matrix& x) {
  if (x.rows() != model.input_dim) throw DimensionMismatch("ffnn input dim mismatch");
  const RowVector preds = ffnn_forward(x, model.params, nullptr, nullptr);
  return preds.transpose();
}

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_unjson(const json& j) {
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return {};
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + " parse error in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

void save_ffnn(const FfnnModel& model, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["kind"] = "ffnn";
  j["config"] = {{"hidden_sizes", model.config.hidden_sizes},
                 {"dropout", model.config.dropout},
                 {"l2", model.config.l2},
                 {"epochs", model.config.epochs},
                 {"batch_size", model.config.batch_size},
                 {"learning_rate", model.config.learning_rate},
                 {"seed", model.config.seed},
                 {"weighted", model.config.weighted}};
  j["input_dim"] = model.input_dim;
  j["loss_weights"] = {{"positive", model.weights.positive},
                       {"negative", model.weights.negative}};
  json hidden = json::array();
  for (std::size_t l = 0; l < model.params.w.size(); ++l) {
    json bj = json::array();
    for (Index i = 0; i < model.params.b[l].size(); ++i) bj.push_back(model.params.b[l][i]);
    hidden.push_back(json{{"w", matrix_json(model.params.w[l])}, {"b", std::move(bj)}});
  }
  json wout = json::array();
  for (Index i = 0; i < model.params.w_out.size(); ++i) wout.push_back(model.params.w_out[i]);
  j["params"] = {{"hidden", std::move(hidden)},
                 {"w_out", std::move(wout)},
                 {"b_out", model.params.b_out}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out << j.dump() << '\n';
}

FfnnModel load_ffnn(const std::string& path) {
  const json j = read_json_file(path, "model");
  if (j.value("kind", "") != "ffnn") throw DataError("not a feed-forward checkpoint: " + path);
  FfnnModel model;
  const auto& c = j.at("config");
  model.config.hidden_sizes = c.at("hidden_sizes").get<std::vector<Index>>();
  model.config.dropout = c.at("dropout").get<double>();
  model.config.l2 = c.at("l2").get<double>();
  model.config.epochs = c.at("epochs").get<int>();
  model.config.batch_size = c.at("batch_size").get<Index>();
  model.config.learning_rate = c.at("learning_rate").get<double>();
  model.config.seed = c.at("seed").get<std::uint64_t>();
  model.config.weighted = c.at("weighted").get<bool>();
  model.input_dim = j.at("input_dim").get<Index>();
  model.weights.positive = j.at("loss_weights").at("positive").get<double>();
  model.weights.negative = j.at("loss_weights").at("negative").get<double>();
  for (const auto& lj : j.at("params").at("hidden")) {
    model.params.w.push_back(matrix_unjson(lj.at("w")));
    const auto& bj = lj.at("b");
    Vector b(static_cast<Index>(bj.size()));
    for (Index i = 0; i < b.size(); ++i) b[i] = bj[i].get<double>();
    model.params.b.push_back(std::move(b));
  }
  const auto& wout = j.at("params").at("w_out");
  model.params.w_out.resize(static_cast<Index>(wout.size()));
  for (Index i = 0; i < model.params.w_out.size(); ++i)
    model.params.w_out[i] = wout[i].get<double>();
  model.params.b_out = j.at("params").at("b_out").get<double>();
  return model;
}

void save_logistic(const LogisticModel& model, const std::string& path) {
  json w = json::array();
  for (Index i = 0; i < model.w.size(); ++i) w.push_back(model.w[i]);
  json j{{"format_version", 1}, {"kind", "logistic"}, {"w", std::move(w)}, {"b", model.b}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out << j.dump() << '\n';
}

LogisticModel load_logistic(const std::string& path) {
  const json j = read_json_file(path, "model");
  if (j.value("kind", "") != "logistic") throw DataError("not a logistic checkpoint: " + path);
  LogisticModel model;
  const auto& w = j.at("w");
  model.w.resize(static_cast<Index>(w.size()));
  for (Index i = 0; i < model.w.size(); ++i) model.w[i] = w[i].get<double>();
  model.b = j.at("b").get<double>();
  return model;
}

void PsychometricSpec::validate(const FeatureSchema& schema) const {
  if (components.empty()) throw ConfigError("instrument '" + name + "' has no components");
  double lo = 0, hi = 0;
  for (const auto& comp : components) {
    const Index f = schema.dynamic_index(comp);
    if (f < 0)
      throw MissingComponent("instrument '" + name + "' component '" + comp +
                             "' is not a dynamic feature");
    const auto& decl = schema.dynamic[f];
    switch (decl.kind) {
      case FeatureKind::binary:
        hi += 1;
        break;
      case FeatureKind::ordinal:
        lo += decl.zero_based ? 0 : 1;
        hi += decl.s_max;
        break;
      case FeatureKind::continuous:
        throw ConfigError("instrument '" + name + "' component '" + comp +
                          "' is continuous; instruments sum binary/ordinal components");
    }
  }
  if (lo != min_total || hi != max_total)
    throw ConfigError("instrument '" + name + "' declares total range [" +
                      std::to_string(min_total) + "," + std::to_string(max_total) +
                      "] but components sum to [" + std::to_string(lo) + "," +
                      std::to_string(hi) + "]");
}

double psychometric_score(const WindowDataset& ds, const WindowRef& ref,
                          const PsychometricSpec& spec) {
  const auto& s = ds.series()[ref.series];
  const Index last_day = ref.start + ds.n() - 1;
  double total = 0;
  for (const auto& comp : spec.components) {
    const Index f = ds.schema().dynamic_index(comp);
    if (f < 0)
      throw MissingComponent("instrument '" + spec.name + "' component '" + comp +
                             "' missing from dataset");
    total += s.raw_dynamics(f, last_day);
  }
  return total;
}

Vector psychometric_scores(const WindowDataset& ds, std::span<const WindowRef> refs,
                           const PsychometricSpec& spec) {
  spec.validate(ds.schema());
  Vector out(static_cast<Index>(refs.size()));
  for (Index j = 0; j < static_cast<Index>(refs.size()); ++j)
    out[j] = psychometric_score(ds, refs[j], spec);
  return out;
}

Vector load_external_scores(const std::string& path, const WindowDataset& ds,
                            std::span<const WindowRef> test_refs) {
  const csv::Table t = csv::read_file(path);
  const Index c_pid = t.col("patient_id");
  const Index c_idx = t.col("label_index");
  const Index c_score = t.col("score");
  if (c_pid < 0 || c_idx < 0 || c_score < 0)
    throw DataError("external scores file needs patient_id,label_index,score columns: " + path);

  std::map<std::pair<std::string, Index>, double> by_key;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string context = path + " row " + std::to_string(r + 2);
    const auto key = std::make_pair(
        row[c_pid], static_cast<Index>(csv::parse_double(row[c_idx], context)));
    const double score = csv::parse_double(row[c_score], context);
    if (!by_key.emplace(key, score).second)
      throw DuplicateKey("duplicate (patient_id,label_index) in " + context);
  }

  if (by_key.size() != test_refs.size())
    throw AlignmentError("external scores file has " + std::to_string(by_key.size()) +
                         " rows but the test set has " + std::to_string(test_refs.size()) +
                         " windows: " + path);
  Vector out(static_cast<Index>(test_refs.size()));
  for (Index j = 0; j < static_cast<Index>(test_refs.size()); ++j) {
    const auto& ref = test_refs[j];
    const auto key =
        std::make_pair(ds.series()[ref.series].series_id, ds.label_pos(ref) + 1);
    const auto it = by_key.find(key);
    if (it == by_key.end())
      throw AlignmentError("external scores missing window (" + key.first + "," +
                           std::to_string(key.second) + "): " + path);
    out[j] = it->second;
  }
  return out;
}

}  // namespace riskcast
