#pragma once

#include "riskcast/types.hpp"
#include "riskcast/windowing.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace riskcast {

struct EmptyBatch : DataError {
  using DataError::DataError;
};

/// Predictions are clipped to [kPredClip, 1-kPredClip] inside the loss logs.
inline constexpr double kPredClip = 1e-7;

enum class LossWeightMode {
  inverse_frequency,  // gamma_p = N_neg/N_pos, gamma_n = 1
  prose_ratio,        // gamma_p = N_pos/N_neg, gamma_n = N_neg/N_pos
  unweighted          // gamma_p = gamma_n = 1
};

struct LossWeights {
  double positive = 1.0;
  double negative = 1.0;
};

LossWeights compute_loss_weights(std::span<const double> labels, LossWeightMode mode);
const char* to_string(LossWeightMode mode);
LossWeightMode loss_weight_mode_from_string(const std::string& s);

struct ModelConfig {
  Index input_dim = 0;
  Index hidden = 32;
  int layers = 1;
  double dropout = 0.0;   // rate in [0, 1)
  double l2 = 0.0;        // lambda
  int epochs = 10;
  Index batch_size = 512;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One stacked layer's weights; gate rows are stacked [input; forget;
/// candidate; output], each hidden-sized.
struct LstmLayer {
  Matrix W;  // 4H x in_dim
  Matrix U;  // 4H x H
  Matrix b;  // 4H x 1
};

struct ModelParams {
  std::vector<LstmLayer> layers;
  Matrix w_out;  // 1 x H
  Matrix b_out;  // 1 x 1
};

/// Uniform fan-in scaled weights, zero biases, forget-gate bias 1.
ModelParams init_params(const ModelConfig& config, Rng& rng);

/// Gradient / moment containers share the parameter layout.
ModelParams zeros_like(const ModelParams& params);

/// Parameter arrays in a fixed traversal order; bias arrays are excluded from
/// L2. Used by the optimizer and by finite-difference checks.
std::vector<std::pair<Matrix*, bool>> param_arrays(ModelParams& params);
std::vector<std::pair<const Matrix*, bool>> param_arrays(const ModelParams& params);

/// Per-layer, per-step {0,1} masks for inverted dropout on hidden outputs.
struct DropoutPlan {
  double rate = 0.0;
  std::vector<std::vector<Matrix>> masks;  // [layer][t], H x B
};

DropoutPlan make_dropout_plan(const ModelConfig& config, Index n, Index batch, Rng& rng);

struct ForwardCache {
  std::vector<std::vector<Matrix>> gates;        // [layer][t] 4H x B, post-activation
  std::vector<std::vector<Matrix>> cell;         // c_t
  std::vector<std::vector<Matrix>> cell_tanh;    // tanh(c_t)
  std::vector<std::vector<Matrix>> hidden;       // h_t before dropout
  std::vector<std::vector<Matrix>> hidden_drop;  // h_t after dropout (eval: == hidden)
  RowVector logits;
  RowVector preds;
};

/// Many-to-one forward pass: only the top layer's final (dropped) hidden
/// state feeds the sigmoid output neuron. Pass dropout == nullptr for eval
/// mode.
RowVector forward_batch(const Batch& batch, const ModelParams& params,
                        const ModelConfig& config, const DropoutPlan* dropout,
                        ForwardCache* cache);

/// Single standard LSTM cell update, exposed for direct checks.
std::pair<Vector, Vector> lstm_cell_forward(const Vector& x, const Vector& h_prev,
                                            const Vector& c_prev, const LstmLayer& layer);

/// Single-window convenience wrapper around forward_batch.
double forward_window(const WindowDataset& ds, const WindowRef& ref, const ModelParams& params,
                      const ModelConfig& config, bool train_mode, Rng& rng);

/// Weighted binary cross-entropy batch loss plus (lambda/2) * sum of squared
/// non-bias weights.
double batch_loss(const RowVector& preds, const RowVector& labels, const LossWeights& weights,
                  const ModelParams& params, double l2);

/// Exact loss gradients via backpropagation through time; dropout masks are
/// the ones the forward pass used.
ModelParams backward_batch(const Batch& batch, const ModelParams& params,
                           const ModelConfig& config, const LossWeights& weights,
                           const DropoutPlan* dropout, const ForwardCache& cache);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(const ModelParams& params);
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

struct TrainLogEntry {
  int epoch = 0;
  Index batch = 0;
  double loss = 0.0;
};

struct TrainedModel {
  ModelConfig config;
  ModelParams params;
  LossWeights weights;
  std::vector<TrainLogEntry> loss_trace;
};

/// Pooled mini-batch training: windows reshuffled each epoch with the seeded
/// RNG, batches of config.batch_size (last partial batch kept), Adam updates.
TrainedModel train(const WindowDataset& ds, std::span<const WindowRef> train_refs,
                   const ModelConfig& config, const LossWeights& weights);

/// Eval-mode scores in [0,1], one per window, in the given order.
Vector predict(const TrainedModel& model, const WindowDataset& ds,
               std::span<const WindowRef> refs);

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);
void save_loss_trace(const TrainedModel& model, const std::string& path);

}  // namespace riskcast
