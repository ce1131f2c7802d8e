#pragma once

// Graph-attention regression network: three multi-head GAT layers with tanh
// and head averaging, mean/max/sum readout, and a linear head. Gradients are
// derived by hand (reverse mode) for the whole forward graph.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "thermograph/archgraph.hpp"
#include "thermograph/oloc.hpp"

namespace thermograph {

inline constexpr int kGatLayers = 3;
inline constexpr int kGatHeads = 4;
inline constexpr int kGatHidden = 16;
inline constexpr int kReadoutDim = 3 * kGatHidden;
inline constexpr double kLeakySlope = 0.2;

struct GatLayerParams {
  std::vector<Eigen::MatrixXd> W;  // per head, in_dim x out_dim
  std::vector<Eigen::VectorXd> a;  // per head, 2 * out_dim: [source | neighbour]

  int in_dim() const { return W.empty() ? 0 : static_cast<int>(W.front().rows()); }
  int out_dim() const { return W.empty() ? 0 : static_cast<int>(W.front().cols()); }
};

struct GatModel {
  std::vector<GatLayerParams> layers;
  Eigen::VectorXd head_w;
  double head_b = 0.0;
  double target_mean = 0.0;
  double target_std = 1.0;

  // Zero-filled model with the default dimensions.
  static GatModel zeros();
};

// Every trainable tensor as a flat view, in a fixed order (layer, head, W
// then a; head_w; head_b).
std::vector<std::span<double>> parameter_tensors(GatModel& model);
std::vector<std::string> parameter_names();
std::size_t parameter_count(const GatModel& model);

GatModel glorot_init(std::uint64_t seed);

// Node attention sets: neighbours plus the node itself.
using AttentionSets = std::vector<std::vector<int>>;
AttentionSets attention_sets(const Eigen::MatrixXd& adjacency);
AttentionSets attention_sets(const FlatGraph& graph);

struct GraphTensor {
  Eigen::MatrixXd features;  // n_v x 4
  AttentionSets attend;
};

GraphTensor to_tensor(const FeatureGraph& fg);

// Throws ErrorKind::kShape on inconsistent dimensions.
Eigen::MatrixXd gat_layer_forward(const Eigen::MatrixXd& H, const Eigen::MatrixXd& adjacency,
                                  const GatLayerParams& params);

// Per-head attention coefficients, row u holding alpha_u,v over attend[u].
std::vector<std::vector<std::vector<double>>> attention_weights(const Eigen::MatrixXd& H, const AttentionSets& attend,
                                                                const GatLayerParams& params);

// [column mean | column max | column sum]; throws ErrorKind::kShape when empty.
Eigen::VectorXd readout(const Eigen::MatrixXd& H);

Eigen::VectorXd embed(const GatModel& model, const GraphTensor& graph);
// Prediction in seconds. Throws ErrorKind::kModelCorrupt for non-finite
// parameters.
double predict(const GatModel& model, const FeatureGraph& fg);
double predict(const GatModel& model, const GraphTensor& graph);

struct Sample {
  GraphTensor graph;
  double target = 0.0;  // seconds
};

// MSE in normalized units, (J - mu) / sigma against the raw network output.
struct LossAndGradient {
  double loss = 0.0;
  GatModel gradient;  // same shapes as the model; normalization fields unused
};

LossAndGradient loss_and_gradients(const GatModel& model, std::span<const Sample* const> batch);
double normalized_mse(const GatModel& model, std::span<const Sample* const> batch);

struct TrainConfig {
  int epochs = 5000;
  int batch_size = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double train_fraction = 0.30;

  void validate() const;
};

inline constexpr int kHistoryBucket = 100;

struct HistoryBucket {
  int first_epoch = 0;
  int epochs = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;  // NaN when there is no test split
};

struct TrainHistory {
  std::vector<HistoryBucket> buckets;
};

struct TrainResult {
  GatModel model;
  TrainHistory history;
};

// Trains from a fresh seeded initialization. Targets are standardized over
// `train`; `test` is only evaluated. Throws ErrorKind::kConfig when `train`
// is smaller than the batch size.
TrainResult fit(std::span<const Sample> train, std::span<const Sample> test, const TrainConfig& cfg);

// Scenario-level split of `dataset`, stratified by CPHX count; returns the
// training scenario ids in ascending order.
std::vector<int> split_scenarios(const std::vector<LabeledInstance>& dataset, double train_fraction,
                                 std::uint64_t seed);

struct TrainOutcome {
  TrainResult result;
  std::vector<int> train_scenarios;
};

TrainOutcome train(const std::vector<LabeledInstance>& dataset, const TrainConfig& cfg);

Eigen::MatrixXd export_embeddings(const GatModel& model, const std::vector<FeatureGraph>& graphs);

struct Checkpoint {
  GatModel model;
  TrainConfig config;
  std::vector<int> train_scenarios;
  std::string holdout;  // e.g. "S5"; empty when nothing was held out
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws ErrorKind::kCheckpoint when the declared dimensions do not match.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace thermograph
