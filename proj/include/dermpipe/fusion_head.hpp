#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dermpipe/dataset.hpp"
#include "dermpipe/metadata.hpp"
#include "dermpipe/rng.hpp"

namespace dermpipe {

struct HeadDims {
  int features = 0;   // F, width of the pooled CNN feature vector
  int hidden = 256;   // H, width of both meta layers
  int fusion = 1024;  // D, width of the layer after concatenation
  int classes = kNumClasses;

  bool operator==(const HeadDims&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DenseLayer {
  RowMatrix weight;  // out × in, row-major
  Eigen::VectorXd bias;
};

struct BatchNormLayer {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

// A named view of one parameter tensor. Running statistics are listed but
// are not trainable.
struct TensorView {
  std::string name;
  std::vector<int> shape;
  double* data = nullptr;
  std::size_t size = 0;
  bool trainable = true;
  bool meta_path = false;
};

struct HeadParams {
  HeadDims dims;
  DenseLayer meta1;
  BatchNormLayer meta1_bn;
  DenseLayer meta2;
  BatchNormLayer meta2_bn;
  DenseLayer fuse;
  BatchNormLayer fuse_bn;
  DenseLayer classifier;

  // Every tensor zero except BN scale and running variance, which are 1.
  static HeadParams zeros(const HeadDims& dims);
  // He-uniform dense weights, zero biases, BN scale 1 / shift 0.
  static HeadParams initialize(const HeadDims& dims, Rng& rng);

  std::vector<TensorView> tensors();
  std::vector<TensorView> tensors() const;

  // Zero the meta-path dense weights and biases. Used together with
  // TrainConfig::freeze_meta to ablate meta data.
  void zero_meta_path();

  void validate() const;
  bool operator==(const HeadParams& other) const;
};

// Train: batch statistics and inverted dropout. Eval: running statistics,
// no dropout.
enum class HeadMode { Train, Eval };

// Normalization used by the batch passes. Running lets the gradient check
// differentiate the eval-mode network.
enum class BnMode { Batch, Running };

struct PassConfig {
  BnMode bn = BnMode::Batch;
  double dropout_p = 0.0;
  // Exponential moving average factor for running statistics (Batch mode).
  double bn_momentum = 0.1;
  bool update_running_stats = false;
};

inline constexpr double kBnEpsilon = 1e-5;

// Single-sample forward pass; returns the 9 logits.
Eigen::VectorXd head_forward(const HeadParams& params, std::span<const double> features, const MetaVector& meta,
                             HeadMode mode, Rng* rng, double dropout_p = 0.4);

// Column-per-sample batch.
struct HeadBatch {
  Eigen::MatrixXd features;  // F × B
  Eigen::MatrixXd meta;      // 11 × B
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
};

// Logits (classes × B). `params` is non-const only for running-stat updates.
Eigen::MatrixXd head_forward_batch(HeadParams& params, const HeadBatch& batch, const PassConfig& pass, Rng* rng);
Eigen::MatrixXd head_forward_batch_eval(const HeadParams& params, const HeadBatch& batch);

// Max-subtracted softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

double weighted_cross_entropy(const Eigen::VectorXd& logits, int label, std::span<const double> weights);

struct LossAndGradients {
  double loss = 0.0;  // mean weighted cross-entropy over the batch
  HeadParams gradients;
};

// Gradients of the mean batch loss w.r.t. every trainable tensor. BN running
// statistics in `params` are updated when pass.update_running_stats is set.
LossAndGradients head_loss_and_gradients(HeadParams& params, const HeadBatch& batch, std::span<const double> weights,
                                         const PassConfig& pass, Rng* rng);

struct AdamState {
  HeadParams first_moment;
  HeadParams second_moment;
  std::int64_t step = 0;

  static AdamState for_params(const HeadParams& params);
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-5;
  int batch_size = 20;
  double dropout_p = 0.4;
  double meta_dropout_p = 0.1;
  int eval_every = 5;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double bn_momentum = 0.1;
  // Leave meta-path tensors untouched by the optimizer.
  bool freeze_meta = false;

  void validate() const;
};

// One Adam step on the mean batch loss; returns that loss. Throws
// NonFiniteLoss when the loss or a gradient is not finite.
double train_step(HeadParams& params, const HeadBatch& batch, std::span<const double> weights, AdamState& adam,
                  const TrainConfig& cfg, Rng& rng);

// Per-image replicated feature vectors produced by an external CNN.
class FeatureStore {
 public:
  FeatureStore(int dim, int replicates);

  int dim() const { return dim_; }
  int replicates() const { return replicates_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  // `values` holds replicates × dim floats.
  void add(const std::string& image, std::span<const float> values);
  bool contains(const std::string& image) const;
  std::span<const float> vector(const std::string& image, int replicate) const;
  const std::vector<float>& raw() const { return data_; }

  bool operator==(const FeatureStore& other) const {
    return dim_ == other.dim_ && replicates_ == other.replicates_ && ids_ == other.ids_ && data_ == other.data_;
  }

 private:
  std::size_t offset(const std::string& image) const;

  int dim_;
  int replicates_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// "DFV1" | u32 count | u32 F | u32 R | count × (u32 length, bytes) | float32 payload.
std::string serialize_feature_store(const FeatureStore& store);
FeatureStore parse_feature_store(std::string_view bytes, std::string_view source_name = "<features>");
void save_feature_store(const FeatureStore& store, const std::string& path);
FeatureStore load_feature_store(const std::string& path);

// "DHCK" | u32 version | u64 descriptor length | JSON descriptor | float32 payload.
std::string serialize_checkpoint(const HeadParams& params);
HeadParams parse_checkpoint(std::string_view bytes, std::string_view source_name = "<checkpoint>");
void save_checkpoint(const HeadParams& params, const std::string& path);
HeadParams load_checkpoint(const std::string& path);

struct HistoryEntry {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_mean_sensitivity;
};

struct TrainResult {
  HeadParams best;
  HeadParams last;
  std::vector<HistoryEntry> history;
  int best_epoch = 0;
  std::optional<double> best_score;
};

std::string format_history(const std::vector<HistoryEntry>& history);

// Softmax averaged over every replicate of the image in `store`.
Eigen::VectorXd predict_replicate_average(const HeadParams& params, const FeatureStore& store, const ManifestRow& row);

// Mean sensitivity over known classes present in `rows`, using the
// replicate-averaged prediction for each image.
double validation_mean_sensitivity(const HeadParams& params, const FeatureStore& store,
                                   std::span<const ManifestRow> rows);

// Throws MissingFeatures naming every row absent from the store.
void require_features(const FeatureStore& store, std::span<const ManifestRow> rows);

TrainResult train_head(const FeatureStore& store, std::span<const ManifestRow> train_rows,
                       std::span<const ManifestRow> val_rows, const ClassWeights& weights, const HeadDims& dims,
                       const TrainConfig& cfg);

}  // namespace dermpipe
