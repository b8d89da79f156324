#include "riskcast/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace riskcast {

using nlohmann::json;

LossWeights compute_loss_weights(std::span<const double> labels, LossWeightMode mode) {
  if (labels.empty()) throw EmptyTraining("no labels to derive loss weights from");
  double pos = 0;
  for (double y : labels) pos += y;
  const double neg = double(labels.size()) - pos;
  LossWeights w;
  switch (mode) {
    case LossWeightMode::unweighted:
      break;
    case LossWeightMode::inverse_frequency:
      if (pos == 0 || neg == 0)
        throw DataError("single-class training labels: cannot weight by inverse frequency");
      w.positive = neg / pos;
      w.negative = 1.0;
      break;
    case LossWeightMode::prose_ratio:
      if (pos == 0 || neg == 0)
        throw DataError("single-class training labels: cannot weight by class ratio");
      w.positive = pos / neg;
      w.negative = neg / pos;
      break;
  }
  return w;
}

const char* to_string(LossWeightMode mode) {
  switch (mode) {
    case LossWeightMode::inverse_frequency: return "inverse_frequency";
    case LossWeightMode::prose_ratio: return "prose_ratio";
    case LossWeightMode::unweighted: return "unweighted";
  }
  return "?";
}

LossWeightMode loss_weight_mode_from_string(const std::string& s) {
  if (s == "inverse_frequency") return LossWeightMode::inverse_frequency;
  if (s == "prose_ratio") return LossWeightMode::prose_ratio;
  if (s == "unweighted") return LossWeightMode::unweighted;
  throw ConfigError("unknown loss weight mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model input_dim must be >= 1");
  if (hidden < 1) throw ConfigError("model hidden size must be >= 1");
  if (layers < 1 || layers > 8) throw ConfigError("model layer count out of range");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (l2 < 0.0) throw ConfigError("l2 must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
}

namespace {

void fill_uniform(Matrix& mat, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < mat.size(); ++i) mat.data()[i] = dist(rng);
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  const Index h = config.hidden;
  Index in_dim = config.input_dim;
  for (int l = 0; l < config.layers; ++l) {
    LstmLayer layer;
    layer.W.resize(4 * h, in_dim);
    layer.U.resize(4 * h, h);
    layer.b = Matrix::Zero(4 * h, 1);
    fill_uniform(layer.W, std::sqrt(3.0 / double(in_dim)), rng);
    fill_uniform(layer.U, std::sqrt(3.0 / double(h)), rng);
    layer.b.block(h, 0, h, 1).setOnes();  // forget gate bias
    p.layers.push_back(std::move(layer));
    in_dim = h;
  }
  p.w_out.resize(1, h);
  fill_uniform(p.w_out, std::sqrt(3.0 / double(h)), rng);
  p.b_out = Matrix::Zero(1, 1);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  for (const auto& layer : params.layers) {
    LstmLayer l;
    l.W = Matrix::Zero(layer.W.rows(), layer.W.cols());
    l.U = Matrix::Zero(layer.U.rows(), layer.U.cols());
    l.b = Matrix::Zero(layer.b.rows(), layer.b.cols());
    z.layers.push_back(std::move(l));
  }
  z.w_out = Matrix::Zero(params.w_out.rows(), params.w_out.cols());
  z.b_out = Matrix::Zero(1, 1);
  return z;
}

std::vector<std::pair<Matrix*, bool>> param_arrays(ModelParams& params) {
  std::vector<std::pair<Matrix*, bool>> out;
  for (auto& layer : params.layers) {
    out.emplace_back(&layer.W, false);
    out.emplace_back(&layer.U, false);
    out.emplace_back(&layer.b, true);
  }
  out.emplace_back(&params.w_out, false);
  out.emplace_back(&params.b_out, true);
  return out;
}

std::vector<std::pair<const Matrix*, bool>> param_arrays(const ModelParams& params) {
  std::vector<std::pair<const Matrix*, bool>> out;
  for (const auto& layer : params.layers) {
    out.emplace_back(&layer.W, false);
    out.emplace_back(&layer.U, false);
    out.emplace_back(&layer.b, true);
  }
  out.emplace_back(&params.w_out, false);
  out.emplace_back(&params.b_out, true);
  return out;
}

DropoutPlan make_dropout_plan(const ModelConfig& config, Index n, Index batch, Rng& rng) {
  DropoutPlan plan;
  plan.rate = config.dropout;
  plan.masks.resize(config.layers);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int l = 0; l < config.layers; ++l) {
    plan.masks[l].resize(n);
    for (Index t = 0; t < n; ++t) {
      Matrix& mask = plan.masks[l][t];
      mask.resize(config.hidden, batch);
      for (Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = dist(rng) < plan.rate ? 0.0 : 1.0;
    }
  }
  return plan;
}

namespace {

// Gate pre-activations -> activations in place: [i f] sigmoid, g tanh, o sigmoid.
void activate_gates(Matrix& z, Index h) {
  z.topRows(2 * h) = sigmoid(z.topRows(2 * h).array());
  z.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh();
  z.bottomRows(h) = sigmoid(z.bottomRows(h).array());
}

}  // namespace

RowVector forward_batch(const Batch& batch, const ModelParams& params,
                        const ModelConfig& config, const DropoutPlan* dropout,
                        ForwardCache* cache) {
  const Index n = static_cast<Index>(batch.x.size());
  if (n < 1) throw EmptyBatch("empty window batch");
  const Index b = batch.x[0].cols();
  if (b < 1) throw EmptyBatch("batch has no windows");
  if (batch.x[0].rows() != config.input_dim)
    throw DimensionMismatch("batch input dim " + std::to_string(batch.x[0].rows()) +
                            " != model input dim " + std::to_string(config.input_dim));
  if (static_cast<int>(params.layers.size()) != config.layers)
    throw DimensionMismatch("parameter layer count does not match config");
  const Index h = config.hidden;
  const double keep = 1.0 - (dropout ? dropout->rate : 0.0);

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.gates.assign(config.layers, {});
  c.cell.assign(config.layers, {});
  c.cell_tanh.assign(config.layers, {});
  c.hidden.assign(config.layers, {});
  c.hidden_drop.assign(config.layers, {});

  for (int l = 0; l < config.layers; ++l) {
    const LstmLayer& layer = params.layers[l];
    auto& gates = c.gates[l];
    auto& cell = c.cell[l];
    auto& cell_tanh = c.cell_tanh[l];
    auto& hidden = c.hidden[l];
    auto& hidden_drop = c.hidden_drop[l];
    gates.resize(n);
    cell.resize(n);
    cell_tanh.resize(n);
    hidden.resize(n);
    hidden_drop.resize(n);

    for (Index t = 0; t < n; ++t) {
      const Matrix& x_t = l == 0 ? batch.x[t] : c.hidden_drop[l - 1][t];
      Matrix z = layer.W * x_t;
      if (t > 0) z.noalias() += layer.U * hidden[t - 1];
      z.colwise() += layer.b.col(0);
      activate_gates(z, h);
      gates[t] = std::move(z);

      const auto i_g = gates[t].topRows(h).array();
      const auto f_g = gates[t].middleRows(h, h).array();
      const auto g_g = gates[t].middleRows(2 * h, h).array();
      const auto o_g = gates[t].bottomRows(h).array();

      if (t > 0)
        cell[t] = (f_g * cell[t - 1].array() + i_g * g_g).matrix();
      else
        cell[t] = (i_g * g_g).matrix();
      cell_tanh[t] = cell[t].array().tanh().matrix();
      hidden[t] = (o_g * cell_tanh[t].array()).matrix();
      if (dropout)
        hidden_drop[t] = (hidden[t].array() * dropout->masks[l][t].array() / keep).matrix();
      else
        hidden_drop[t] = hidden[t];
    }
  }

  c.logits = params.w_out * c.hidden_drop[config.layers - 1][n - 1];
  c.logits.array() += params.b_out(0, 0);
  c.preds = sigmoid(c.logits.array()).matrix();
  return c.preds;
}

std::pair<Vector, Vector> lstm_cell_forward(const Vector& x, const Vector& h_prev,
                                            const Vector& c_prev, const LstmLayer& layer) {
  const Index h = layer.U.cols();
  if (layer.W.cols() != x.size() || h_prev.size() != h || c_prev.size() != h ||
      layer.W.rows() != 4 * h || layer.b.rows() != 4 * h)
    throw DimensionMismatch("lstm_cell_forward: inconsistent shapes");
  Matrix z = layer.W * x + layer.U * h_prev + layer.b;
  activate_gates(z, h);
  const auto i_g = z.topRows(h).array();
  const auto f_g = z.middleRows(h, h).array();
  const auto g_g = z.middleRows(2 * h, h).array();
  const auto o_g = z.bottomRows(h).array();
  Vector c_t = (f_g * c_prev.array() + i_g * g_g).matrix();
  Vector h_t = (o_g * c_t.array().tanh()).matrix();
  return {h_t, c_t};
}

double forward_window(const WindowDataset& ds, const WindowRef& ref, const ModelParams& params,
                      const ModelConfig& config, bool train_mode, Rng& rng) {
  Batch batch = assemble_batch(ds, std::span<const WindowRef>(&ref, 1));
  if (train_mode && config.dropout > 0.0) {
    DropoutPlan plan = make_dropout_plan(config, ds.n(), 1, rng);
    return forward_batch(batch, params, config, &plan, nullptr)(0);
  }
  return forward_batch(batch, params, config, nullptr, nullptr)(0);
}

double batch_loss(const RowVector& preds, const RowVector& labels, const LossWeights& weights,
                  const ModelParams& params, double l2) {
  const Index b = preds.size();
  if (b == 0) throw EmptyBatch("batch_loss of empty batch");
  if (labels.size() != b) throw DimensionMismatch("preds/labels size mismatch");
  double sum = 0;
  for (Index j = 0; j < b; ++j) {
    const double y = labels[j];
    const double p = std::clamp(preds[j], kPredClip, 1.0 - kPredClip);
    sum += -y * std::log(p) * weights.positive - (1.0 - y) * std::log(1.0 - p) * weights.negative;
  }
  double reg = 0;
  if (l2 > 0) {
    for (const auto& [arr, is_bias] : param_arrays(params))
      if (!is_bias) reg += arr->squaredNorm();
    reg *= 0.5 * l2;
  }
  return sum / double(b) + reg;
}

ModelParams backward_batch(const Batch& batch, const ModelParams& params,
                           const ModelConfig& config, const LossWeights& weights,
                           const DropoutPlan* dropout, const ForwardCache& cache) {
  const Index n = static_cast<Index>(batch.x.size());
  const Index b = batch.x[0].cols();
  const Index h = config.hidden;
  const double keep = 1.0 - (dropout ? dropout->rate : 0.0);
  const int top = config.layers - 1;

  ModelParams grads = zeros_like(params);

  // d(loss)/d(logit), honouring the prediction clip inside the logs
  RowVector dlogit(b);
  for (Index j = 0; j < b; ++j) {
    const double y = batch.labels[j];
    const double p = cache.preds[j];
    const bool clipped = p <= kPredClip || p >= 1.0 - kPredClip;
    if (clipped) {
      dlogit[j] = 0.0;
    } else {
      const double dp = (-y * weights.positive / p + (1.0 - y) * weights.negative / (1.0 - p)) /
                        double(b);
      dlogit[j] = dp * p * (1.0 - p);
    }
  }

  grads.w_out.noalias() = dlogit * cache.hidden_drop[top][n - 1].transpose();
  grads.b_out(0, 0) = dlogit.sum();

  // gradient w.r.t. each layer's dropped output sequence
  std::vector<std::vector<Matrix>> dout(config.layers);
  for (int l = 0; l <= top; ++l) dout[l].resize(n);
  dout[top][n - 1] = params.w_out.transpose() * dlogit;

  for (int l = top; l >= 0; --l) {
    const LstmLayer& layer = params.layers[l];
    LstmLayer& g_layer = grads.layers[l];
    Matrix dh_rec = Matrix::Zero(h, b);
    Matrix dc = Matrix::Zero(h, b);

    for (Index t = n - 1; t >= 0; --t) {
      Matrix dh = dh_rec;
      if (dout[l][t].size() > 0) {
        if (dropout)
          dh.array() += dout[l][t].array() * dropout->masks[l][t].array() / keep;
        else
          dh += dout[l][t];
      }

      const auto i_g = cache.gates[l][t].topRows(h).array();
      const auto f_g = cache.gates[l][t].middleRows(h, h).array();
      const auto g_g = cache.gates[l][t].middleRows(2 * h, h).array();
      const auto o_g = cache.gates[l][t].bottomRows(h).array();
      const auto tanh_c = cache.cell_tanh[l][t].array();

      const Matrix d_o = (dh.array() * tanh_c).matrix();
      dc.array() += dh.array() * o_g * (1.0 - tanh_c.square());

      Matrix dz(4 * h, b);
      dz.topRows(h) = (dc.array() * g_g * i_g * (1.0 - i_g)).matrix();  // input gate
      if (t > 0)
        dz.middleRows(h, h) =
            (dc.array() * cache.cell[l][t - 1].array() * f_g * (1.0 - f_g)).matrix();
      else
        dz.middleRows(h, h).setZero();  // c_{-1} = 0
      dz.middleRows(2 * h, h) = (dc.array() * i_g * (1.0 - g_g.square())).matrix();
      dz.bottomRows(h) = (d_o.array() * o_g * (1.0 - o_g)).matrix();

      const Matrix& x_t = l == 0 ? batch.x[t] : cache.hidden_drop[l - 1][t];
      g_layer.W.noalias() += dz * x_t.transpose();
      if (t > 0) g_layer.U.noalias() += dz * cache.hidden[l][t - 1].transpose();
      g_layer.b.col(0).noalias() += dz.rowwise().sum();

      if (l > 0) dout[l - 1][t] = layer.W.transpose() * dz;
      if (t > 0) {
        dh_rec.noalias() = layer.U.transpose() * dz;
        dc = (dc.array() * f_g).matrix();
      }
    }
  }

  if (config.l2 > 0) {
    auto g = param_arrays(grads);
    auto p = param_arrays(params);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!g[i].second) *g[i].first += config.l2 * *p[i].first;
  }
  return grads;
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState state;
  for (const auto& [arr, is_bias] : param_arrays(params)) {
    state.m.push_back(Matrix::Zero(arr->rows(), arr->cols()));
    state.v.push_back(Matrix::Zero(arr->rows(), arr->cols()));
  }
  return state;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  auto p = param_arrays(params);
  auto g = param_arrays(grads);
  if (p.size() != state.m.size()) throw DimensionMismatch("adam state does not match params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto grad = g[i].first->array();
    auto& m = state.m[i];
    auto& v = state.v[i];
    m.array() = state.beta1 * m.array() + (1.0 - state.beta1) * grad;
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * grad.square();
    p[i].first->array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  }
}

TrainedModel train(const WindowDataset& ds, std::span<const WindowRef> train_refs,
                   const ModelConfig& config, const LossWeights& weights) {
  config.validate();
  if (train_refs.empty()) throw EmptyTraining("no training windows");
  if (ds.input_dim() != config.input_dim)
    throw DimensionMismatch("dataset input dim " + std::to_string(ds.input_dim()) +
                            " != config input dim " + std::to_string(config.input_dim));

  TrainedModel model;
  model.config = config;
  model.weights = weights;
  Rng rng(config.seed);
  model.params = init_params(config, rng);
  AdamState adam = make_adam_state(model.params);

  std::vector<WindowRef> order(train_refs.begin(), train_refs.end());
  ForwardCache cache;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Index batch_idx = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, order.size() - pos);
      const std::span<const WindowRef> refs(order.data() + pos, count);
      Batch batch = assemble_batch(ds, refs);
      if (config.dropout > 0.0) {
        DropoutPlan plan = make_dropout_plan(config, ds.n(), batch.size(), rng);
        forward_batch(batch, model.params, config, &plan, &cache);
        model.loss_trace.push_back(
            {epoch, batch_idx, batch_loss(cache.preds, batch.labels, weights, model.params,
                                          config.l2)});
        ModelParams grads = backward_batch(batch, model.params, config, weights, &plan, cache);
        adam_step(model.params, grads, adam, config.learning_rate);
      } else {
        forward_batch(batch, model.params, config, nullptr, &cache);
        model.loss_trace.push_back(
            {epoch, batch_idx, batch_loss(cache.preds, batch.labels, weights, model.params,
                                          config.l2)});
        ModelParams grads = backward_batch(batch, model.params, config, weights, nullptr, cache);
        adam_step(model.params, grads, adam, config.learning_rate);
      }
      ++batch_idx;
    }
  }
  return model;
}

Vector predict(const TrainedModel& model, const WindowDataset& ds,
               std::span<const WindowRef> refs) {
  if (ds.input_dim() != model.config.input_dim)
    throw DimensionMismatch("dataset input dim does not match model");
  Vector scores(refs.size());
  ForwardCache cache;
  for (std::size_t pos = 0; pos < refs.size(); pos += model.config.batch_size) {
    const std::size_t count = std::min<std::size_t>(model.config.batch_size, refs.size() - pos);
    Batch batch = assemble_batch(ds, refs.subspan(pos, count));
    const RowVector preds = forward_batch(batch, model.params, model.config, nullptr, &cache);
    for (std::size_t j = 0; j < count; ++j) scores[static_cast<Index>(pos + j)] = preds[Index(j)];
  }
  return scores;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return {};
  const Index cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["config"] = {{"input_dim", model.config.input_dim},
                 {"hidden", model.config.hidden},
                 {"layers", model.config.layers},
                 {"dropout", model.config.dropout},
                 {"l2", model.config.l2},
                 {"epochs", model.config.epochs},
                 {"batch_size", model.config.batch_size},
                 {"learning_rate", model.config.learning_rate},
                 {"seed", model.config.seed}};
  j["loss_weights"] = {{"positive", model.weights.positive},
                       {"negative", model.weights.negative}};
  json layers = json::array();
  for (const auto& layer : model.params.layers)
    layers.push_back(json{{"W", matrix_to_json(layer.W)},
                          {"U", matrix_to_json(layer.U)},
                          {"b", matrix_to_json(layer.b)}});
  j["params"] = {{"layers", std::move(layers)},
                 {"w_out", matrix_to_json(model.params.w_out)},
                 {"b_out", matrix_to_json(model.params.b_out)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out << j.dump() << '\n';
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("model parse error in " + path + ": " + e.what());
  }
  if (j.value("format_version", 0) != 1)
    throw DataError("unsupported model format in " + path);
  TrainedModel model;
  const auto& c = j.at("config");
  model.config.input_dim = c.at("input_dim").get<Index>();
  model.config.hidden = c.at("hidden").get<Index>();
  model.config.layers = c.at("layers").get<int>();
  model.config.dropout = c.at("dropout").get<double>();
  model.config.l2 = c.at("l2").get<double>();
  model.config.epochs = c.at("epochs").get<int>();
  model.config.batch_size = c.at("batch_size").get<Index>();
  model.config.learning_rate = c.at("learning_rate").get<double>();
  model.config.seed = c.at("seed").get<std::uint64_t>();
  model.weights.positive = j.at("loss_weights").at("positive").get<double>();
  model.weights.negative = j.at("loss_weights").at("negative").get<double>();
  for (const auto& layer : j.at("params").at("layers")) {
    LstmLayer l;
    l.W = matrix_from_json(layer.at("W"));
    l.U = matrix_from_json(layer.at("U"));
    l.b = matrix_from_json(layer.at("b"));
    model.params.layers.push_back(std::move(l));
  }
  model.params.w_out = matrix_from_json(j.at("params").at("w_out"));
  model.params.b_out = matrix_from_json(j.at("params").at("b_out"));
  return model;
}

void save_loss_trace(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write loss trace: " + path);
  out << "epoch,batch,loss\n";
  char buf[64];
  for (const auto& e : model.loss_trace) {
    std::snprintf(buf, sizeof(buf), "%d,%lld,%.17g\n", e.epoch, (long long)e.batch, e.loss);
    out << buf;
  }
}

}  // namespace riskcast
