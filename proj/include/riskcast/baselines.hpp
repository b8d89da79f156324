#pragma once

#include "riskcast/model.hpp"
#include "riskcast/types.hpp"
#include "riskcast/windowing.hpp"

#include <span>
#include <string>
#include <vector>

namespace riskcast {

struct MissingComponent : DataError {
  using DataError::DataError;
};
struct DuplicateKey : DataError {
  using DataError::DataError;
};

/// Flattening order (stable, documented): event block y_w..y_{w+n-1}, then
/// the dynamic block day-major (all features of day w, then day w+1, ...),
/// then the static vector. Length n*(1+|F_d|) + |F_s|.
Index flat_dim(const WindowDataset& ds);
Vector flatten(const WindowDataset& ds, const WindowRef& ref);

/// Inverse of flatten, for round-trip checks: reconstructs the n input
/// columns x_t = y_t ++ D_t ++ S.
std::vector<Vector> unflatten(const WindowDataset& ds, const Vector& flat);

struct FlatDataset {
  Matrix x;       // flat_dim x windows
  RowVector labels;
};

FlatDataset flatten_all(const WindowDataset& ds, std::span<const WindowRef> refs);

struct LogisticModel {
  Vector w;
  double b = 0.0;

  Vector score(const Matrix& x) const;  // sigmoid of affine map, per column
};

/// Mini-batch gradient descent (Adam) on binary cross-entropy + (l2/2)|w|^2;
/// unweighted loss by default per the benchmark protocol.
LogisticModel train_logistic(const FlatDataset& train, double l2, int epochs, double lr,
                             std::uint64_t seed, LossWeights weights = {1.0, 1.0},
                             Index batch_size = 512);

/// Loss/gradient surface exposed for finite-difference checks.
double logistic_loss(const LogisticModel& m, const Matrix& x, const RowVector& labels,
                     const LossWeights& weights, double l2);
std::pair<Vector, double> logistic_grad(const LogisticModel& m, const Matrix& x,
                                        const RowVector& labels, const LossWeights& weights,
                                        double l2);

struct FfnnConfig {
  std::vector<Index> hidden_sizes;  // 1 or 2 layers
  double dropout = 0.0;
  double l2 = 0.0;
  int epochs = 30;
  Index batch_size = 512;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  bool weighted = true;  // FFNN is the one benchmark that keeps the weighted loss

  void validate() const;
};

struct FfnnParams {
  std::vector<Matrix> w;  // hidden affine maps
  std::vector<Vector> b;
  RowVector w_out;
  double b_out = 0.0;
};

struct FfnnModel {
  FfnnConfig config;
  Index input_dim = 0;
  FfnnParams params;
  LossWeights weights;
};

struct FfnnCache {
  std::vector<Matrix> act;       // tanh activations per hidden layer
  std::vector<Matrix> act_drop;  // after dropout
  RowVector preds;
};

struct FfnnDropoutPlan {
  double rate = 0.0;
  std::vector<Matrix> masks;  // per hidden layer
};

FfnnDropoutPlan make_ffnn_dropout_plan(const FfnnConfig& config, Index batch, Rng& rng);
RowVector ffnn_forward(const Matrix& x, const FfnnParams& params,
                       const FfnnDropoutPlan* dropout, FfnnCache* cache);
double ffnn_loss(const RowVector& preds, const RowVector& labels, const LossWeights& weights,
                 const FfnnParams& params, double l2);
FfnnParams ffnn_backward(const Matrix& x, const RowVector& labels, const FfnnParams& params,
                         const FfnnConfig& config, const LossWeights& weights,
                         const FfnnDropoutPlan* dropout, const FfnnCache& cache);

/// Tanh MLP over flattened windows with a sigmoid output neuron; same loss
/// and optimizer machinery as the recurrent model.
FfnnModel train_ffnn(const FlatDataset& train, const FfnnConfig& config,
                     const LossWeights& weights);
Vector ffnn_predict(const FfnnModel& model, const Matrix& x);

void save_ffnn(const FfnnModel& model, const std::string& path);
FfnnModel load_ffnn(const std::string& path);
void save_logistic(const LogisticModel& model, const std::string& path);
LogisticModel load_logistic(const std::string& path);

/// A summed-component instrument: component features and the declared total
/// score range, e.g. seven binary components (0-7) or twenty 0-2 components
/// (0-40).
struct PsychometricSpec {
  std::string name;
  std::vector<std::string> components;
  double min_total = 0.0;
  double max_total = 0.0;

  /// Checks components exist as dynamic features of instrument-like kind and
  /// that the summed per-component ranges match the declared totals.
  void validate(const FeatureSchema& schema) const;
};

/// Instrument total on the window's final day, read from raw
/// (pre-standardization) dynamic values.
double psychometric_score(const WindowDataset& ds, const WindowRef& ref,
                          const PsychometricSpec& spec);
Vector psychometric_scores(const WindowDataset& ds, std::span<const WindowRef> refs,
                           const PsychometricSpec& spec);

/// Reads `patient_id,label_index,score` rows and aligns them to the test
/// windows; any missing, extra, or duplicate key is an error.
Vector load_external_scores(const std::string& path, const WindowDataset& ds,
                            std::span<const WindowRef> test_refs);

}  // namespace riskcast
