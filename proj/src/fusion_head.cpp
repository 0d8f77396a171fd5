#include "dermpipe/fusion_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dermpipe/csv.hpp"
#include "dermpipe/errors.hpp"
#include "dermpipe/metrics.hpp"

namespace dermpipe {
namespace {

DenseLayer zero_dense(int out, int in) {
  return {RowMatrix::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

BatchNormLayer identity_bn(int n) {
  return {Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

void he_uniform(DenseLayer& layer, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
    layer.weight.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  layer.bias.setZero();
}

template <typename Params>
std::vector<TensorView> list_tensors(Params& p) {
  std::vector<TensorView> out;
  const auto dense = [&](const char* name, auto& layer, bool meta) {
    out.push_back({std::string(name) + ".weight",
                   {static_cast<int>(layer.weight.rows()), static_cast<int>(layer.weight.cols())},
                   const_cast<double*>(layer.weight.data()), static_cast<std::size_t>(layer.weight.size()), true, meta});
    out.push_back({std::string(name) + ".bias", {static_cast<int>(layer.bias.size())},
                   const_cast<double*>(layer.bias.data()), static_cast<std::size_t>(layer.bias.size()), true, meta});
  };
  const auto bn = [&](const char* name, auto& layer, bool meta) {
    const int n = static_cast<int>(layer.gamma.size());
    const auto add = [&](const char* field, auto& vec, bool trainable) {
      out.push_back({std::string(name) + "." + field, {n}, const_cast<double*>(vec.data()),
                     static_cast<std::size_t>(n), trainable, meta});
    };
    add("gamma", layer.gamma, true);
    add("beta", layer.beta, true);
    add("running_mean", layer.running_mean, false);
    add("running_var", layer.running_var, false);
  };
  dense("meta1", p.meta1, true);
  bn("meta1_bn", p.meta1_bn, true);
  dense("meta2", p.meta2, true);
  bn("meta2_bn", p.meta2_bn, true);
  dense("fuse", p.fuse, false);
  bn("fuse_bn", p.fuse_bn, false);
  dense("classifier", p.classifier, false);
  return out;
}

HeadParams zeros_like(const HeadParams& params) {
  HeadParams g = params;
  for (auto& t : g.tensors()) std::fill(t.data, t.data + t.size, 0.0);
  return g;
}

// Cached activations of one dense → BN → ReLU → dropout block.
struct BlockCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd xhat;
  Eigen::MatrixXd pre_activation;
  Eigen::MatrixXd dropout;  // 0 or 1/(1-p); empty when dropout is off
  Eigen::VectorXd inv_std;
};

Eigen::MatrixXd block_forward(const DenseLayer& dense, const BatchNormLayer& bn, BatchNormLayer* running_out,
                              const Eigen::MatrixXd& x, const PassConfig& pass, Rng* rng, BlockCache* cache) {
  Eigen::MatrixXd z = dense.weight * x;
  z.colwise() += dense.bias;
  const auto batch = static_cast<double>(x.cols());

  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  if (pass.bn == BnMode::Batch) {
    mean = z.rowwise().mean();
    var = (z.colwise() - mean).array().square().rowwise().mean().matrix();
    if (running_out && pass.update_running_stats) {
      const double unbias = batch > 1.0 ? batch / (batch - 1.0) : 1.0;
      running_out->running_mean = (1.0 - pass.bn_momentum) * bn.running_mean + pass.bn_momentum * mean;
      running_out->running_var = (1.0 - pass.bn_momentum) * bn.running_var + pass.bn_momentum * unbias * var;
    }
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }
  const Eigen::VectorXd inv_std = (var.array() + kBnEpsilon).rsqrt().matrix();
  Eigen::MatrixXd xhat = ((z.colwise() - mean).array().colwise() * inv_std.array()).matrix();
  Eigen::MatrixXd a = (xhat.array().colwise() * bn.gamma.array()).matrix();
  a.colwise() += bn.beta;
  Eigen::MatrixXd y = a.cwiseMax(0.0);

  Eigen::MatrixXd drop;
  if (pass.dropout_p > 0.0) {
    if (!rng) throw PipelineError(ErrorKind::InvalidArgument, "dropout requires an rng");
    const double keep = 1.0 - pass.dropout_p;
    const double scale = keep > 0.0 ? 1.0 / keep : 0.0;
    drop.resize(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      for (Eigen::Index i = 0; i < y.rows(); ++i) drop(i, j) = rng->uniform() < keep ? scale : 0.0;
    }
    y = y.cwiseProduct(drop);
  }

  if (cache) {
    cache->input = x;
    cache->xhat = std::move(xhat);
    cache->pre_activation = std::move(a);
    cache->dropout = std::move(drop);
    cache->inv_std = inv_std;
  }
  return y;
}

Eigen::MatrixXd block_backward(const Eigen::MatrixXd& dy, const BlockCache& cache, const DenseLayer& dense,
                               const BatchNormLayer& bn, BnMode mode, DenseLayer& g_dense, BatchNormLayer& g_bn) {
  Eigen::MatrixXd da = dy;
  if (cache.dropout.size() > 0) da = da.cwiseProduct(cache.dropout);
  da = (cache.pre_activation.array() > 0.0).select(da, 0.0);

  g_bn.gamma = da.cwiseProduct(cache.xhat).rowwise().sum();
  g_bn.beta = da.rowwise().sum();

  const Eigen::MatrixXd dxhat = (da.array().colwise() * bn.gamma.array()).matrix();
  Eigen::MatrixXd dz;
  if (mode == BnMode::Batch) {
    const auto batch = static_cast<double>(dy.cols());
    const Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
    const Eigen::VectorXd sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).rowwise().sum();
    Eigen::MatrixXd centered = batch * dxhat;
    centered.colwise() -= sum_dxhat;
    centered -= (cache.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
    dz = (centered.array().colwise() * (cache.inv_std.array() / batch)).matrix();
  } else {
    dz = (dxhat.array().colwise() * cache.inv_std.array()).matrix();
  }

  g_dense.weight = dz * cache.input.transpose();
  g_dense.bias = dz.rowwise().sum();
  return dense.weight.transpose() * dz;
}

struct ForwardCache {
  BlockCache meta1;
  BlockCache meta2;
  BlockCache fuse;
  Eigen::MatrixXd fused;  // classifier input
};

void check_batch(const HeadParams& params, const HeadBatch& batch) {
  const int b = batch.size();
  if (b < 1) throw PipelineError(ErrorKind::InvalidArgument, "empty batch");
  if (batch.features.rows() != params.dims.features || batch.features.cols() != b) {
    throw PipelineError(ErrorKind::ShapeMismatch, "feature block is " + std::to_string(batch.features.rows()) + "x" +
                                                      std::to_string(batch.features.cols()) + ", expected " +
                                                      std::to_string(params.dims.features) + "x" + std::to_string(b));
  }
  if (batch.meta.rows() != kMetaDim || batch.meta.cols() != b) {
    throw PipelineError(ErrorKind::ShapeMismatch, "meta block must be 11 x batch");
  }
}

Eigen::MatrixXd forward_impl(const HeadParams& params, HeadParams* running_out, const HeadBatch& batch,
                             const PassConfig& pass, Rng* rng, ForwardCache* cache) {
  check_batch(params, batch);
  const Eigen::MatrixXd m1 = block_forward(params.meta1, params.meta1_bn, running_out ? &running_out->meta1_bn : nullptr,
                                           batch.meta, pass, rng, cache ? &cache->meta1 : nullptr);
  const Eigen::MatrixXd m2 = block_forward(params.meta2, params.meta2_bn, running_out ? &running_out->meta2_bn : nullptr,
                                           m1, pass, rng, cache ? &cache->meta2 : nullptr);
  Eigen::MatrixXd cat(params.dims.features + params.dims.hidden, batch.size());
  cat.topRows(params.dims.features) = batch.features;
  cat.bottomRows(params.dims.hidden) = m2;
  Eigen::MatrixXd fused = block_forward(params.fuse, params.fuse_bn, running_out ? &running_out->fuse_bn : nullptr, cat,
                                        pass, rng, cache ? &cache->fuse : nullptr);
  Eigen::MatrixXd logits = params.classifier.weight * fused;
  logits.colwise() += params.classifier.bias;
  if (cache) cache->fused = std::move(fused);
  return logits;
}

void check_weights(std::span<const double> weights, int classes) {
  if (weights.size() != static_cast<std::size_t>(classes)) {
    throw PipelineError(ErrorKind::ShapeMismatch, "class weight vector must have one entry per class");
  }
}

}  // namespace

HeadParams HeadParams::zeros(const HeadDims& dims) {
  if (dims.features < 1 || dims.hidden < 1 || dims.fusion < 1 || dims.classes < 1) {
    throw PipelineError(ErrorKind::InvalidArgument, "head dimensions must be positive");
  }
  HeadParams p;
  p.dims = dims;
  p.meta1 = zero_dense(dims.hidden, kMetaDim);
  p.meta1_bn = identity_bn(dims.hidden);
  p.meta2 = zero_dense(dims.hidden, dims.hidden);
  p.meta2_bn = identity_bn(dims.hidden);
  p.fuse = zero_dense(dims.fusion, dims.features + dims.hidden);
  p.fuse_bn = identity_bn(dims.fusion);
  p.classifier = zero_dense(dims.classes, dims.fusion);
  return p;
}

HeadParams HeadParams::initialize(const HeadDims& dims, Rng& rng) {
  HeadParams p = zeros(dims);
  he_uniform(p.meta1, rng);
  he_uniform(p.meta2, rng);
  he_uniform(p.fuse, rng);
  he_uniform(p.classifier, rng);
  return p;
}

std::vector<TensorView> HeadParams::tensors() { return list_tensors<HeadParams>(*this); }
std::vector<TensorView> HeadParams::tensors() const { return list_tensors<const HeadParams>(*this); }

void HeadParams::zero_meta_path() {
  meta1.weight.setZero();
  meta1.bias.setZero();
  meta2.weight.setZero();
  meta2.bias.setZero();
}

void HeadParams::validate() const {
  const HeadParams expected = zeros(dims);
  const auto a = tensors();
  const auto b = expected.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape != b[i].shape) throw PipelineError(ErrorKind::ShapeMismatch, "tensor " + a[i].name + " has wrong shape");
    for (std::size_t k = 0; k < a[i].size; ++k) {
      if (!std::isfinite(a[i].data[k])) throw PipelineError(ErrorKind::InvalidArgument, "tensor " + a[i].name + " is not finite");
    }
  }
  for (const auto* bn : {&meta1_bn, &meta2_bn, &fuse_bn}) {
    if ((bn->running_var.array() <= 0.0).any()) {
      throw PipelineError(ErrorKind::InvalidArgument, "BN running variance must be positive");
    }
  }
}

bool HeadParams::operator==(const HeadParams& other) const {
  if (!(dims == other.dims)) return false;
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape != b[i].shape || !std::equal(a[i].data, a[i].data + a[i].size, b[i].data)) return false;
  }
  return true;
}

Eigen::VectorXd head_forward(const HeadParams& params, std::span<const double> features, const MetaVector& meta,
                             HeadMode mode, Rng* rng, double dropout_p) {
  if (features.size() != static_cast<std::size_t>(params.dims.features)) {
    throw PipelineError(ErrorKind::ShapeMismatch, "feature vector has " + std::to_string(features.size()) +
                                                      " entries, head expects " + std::to_string(params.dims.features));
  }
  HeadBatch batch;
  batch.features = Eigen::Map<const Eigen::VectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
  batch.meta = Eigen::Map<const Eigen::VectorXd>(meta.data(), kMetaDim);
  batch.labels = {0};
  PassConfig pass;
  if (mode == HeadMode::Train) {
    pass.bn = BnMode::Batch;
    pass.dropout_p = dropout_p;
  } else {
    pass.bn = BnMode::Running;
    rng = nullptr;
  }
  return forward_impl(params, nullptr, batch, pass, rng, nullptr).col(0);
}

Eigen::MatrixXd head_forward_batch(HeadParams& params, const HeadBatch& batch, const PassConfig& pass, Rng* rng) {
  HeadParams* running = pass.update_running_stats ? &params : nullptr;
  return forward_impl(params, running, batch, pass, rng, nullptr);
}

Eigen::MatrixXd head_forward_batch_eval(const HeadParams& params, const HeadBatch& batch) {
  PassConfig pass;
  pass.bn = BnMode::Running;
  return forward_impl(params, nullptr, batch, pass, nullptr, nullptr);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - peak).exp().matrix();
  return e / e.sum();
}

double weighted_cross_entropy(const Eigen::VectorXd& logits, int label, std::span<const double> weights) {
  check_weights(weights, static_cast<int>(logits.size()));
  if (label < 0 || label >= logits.size()) throw PipelineError(ErrorKind::InvalidArgument, "label out of range");
  const double peak = logits.maxCoeff();
  const double log_sum = std::log((logits.array() - peak).exp().sum()) + peak;
  return weights[label] * (log_sum - logits(label));
}

LossAndGradients head_loss_and_gradients(HeadParams& params, const HeadBatch& batch, std::span<const double> weights,
                                         const PassConfig& pass, Rng* rng) {
  check_weights(weights, params.dims.classes);
  ForwardCache cache;
  // Batch mode never reads the running statistics, so updating them in
  // place during the pass is safe.
  HeadParams* running = pass.update_running_stats && pass.bn == BnMode::Batch ? &params : nullptr;
  const HeadParams& source = params;
  const Eigen::MatrixXd logits = forward_impl(source, running, batch, pass, rng, &cache);

  const int b = batch.size();
  LossAndGradients out{0.0, zeros_like(params)};
  Eigen::MatrixXd dlogits(logits.rows(), b);
  for (int j = 0; j < b; ++j) {
    const int label = batch.labels[static_cast<std::size_t>(j)];
    if (label < 0 || label >= params.dims.classes) throw PipelineError(ErrorKind::InvalidArgument, "label out of range");
    const Eigen::VectorXd col = logits.col(j);
    out.loss += weighted_cross_entropy(col, label, weights);
    Eigen::VectorXd d = softmax(col);
    d(label) -= 1.0;
    dlogits.col(j) = weights[label] * d / static_cast<double>(b);
  }
  out.loss /= static_cast<double>(b);

  HeadParams& g = out.gradients;
  g.classifier.weight = dlogits * cache.fused.transpose();
  g.classifier.bias = dlogits.rowwise().sum();
  const Eigen::MatrixXd dfused = source.classifier.weight.transpose() * dlogits;
  const Eigen::MatrixXd dcat = block_backward(dfused, cache.fuse, source.fuse, source.fuse_bn, pass.bn, g.fuse, g.fuse_bn);
  const Eigen::MatrixXd dm2 = dcat.bottomRows(params.dims.hidden);
  const Eigen::MatrixXd dm1 = block_backward(dm2, cache.meta2, source.meta2, source.meta2_bn, pass.bn, g.meta2, g.meta2_bn);
  block_backward(dm1, cache.meta1, source.meta1, source.meta1_bn, pass.bn, g.meta1, g.meta1_bn);
  return out;
}

AdamState AdamState::for_params(const HeadParams& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || eval_every < 1) {
    throw PipelineError(ErrorKind::InvalidArgument, "epochs, batch_size and eval_every must be positive");
  }
  if (!(learning_rate >= 0.0)) throw PipelineError(ErrorKind::InvalidArgument, "learning rate must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw PipelineError(ErrorKind::InvalidArgument, "dropout_p must lie in [0,1)");
  if (!(meta_dropout_p >= 0.0 && meta_dropout_p <= 1.0)) {
    throw PipelineError(ErrorKind::InvalidArgument, "meta_dropout_p must lie in [0,1]");
  }
}

double train_step(HeadParams& params, const HeadBatch& batch, std::span<const double> weights, AdamState& adam,
                  const TrainConfig& cfg, Rng& rng) {
  PassConfig pass;
  pass.bn = BnMode::Batch;
  pass.dropout_p = cfg.dropout_p;
  pass.bn_momentum = cfg.bn_momentum;
  pass.update_running_stats = true;
  LossAndGradients lg = head_loss_and_gradients(params, batch, weights, pass, &rng);
  if (!std::isfinite(lg.loss)) {
    throw PipelineError(ErrorKind::NonFiniteLoss, "batch loss is " + format_double(lg.loss) + " at Adam step " +
                                                      std::to_string(adam.step + 1));
  }

  adam.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.step));
  auto p = params.tensors();
  const auto g = lg.gradients.tensors();
  auto m = adam.first_moment.tensors();
  auto v = adam.second_moment.tensors();
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (!p[t].trainable || (cfg.freeze_meta && p[t].meta_path)) continue;
    for (std::size_t k = 0; k < p[t].size; ++k) {
      const double grad = g[t].data[k];
      if (!std::isfinite(grad)) {
        throw PipelineError(ErrorKind::NonFiniteLoss, "non-finite gradient in " + p[t].name);
      }
      m[t].data[k] = cfg.adam_beta1 * m[t].data[k] + (1.0 - cfg.adam_beta1) * grad;
      v[t].data[k] = cfg.adam_beta2 * v[t].data[k] + (1.0 - cfg.adam_beta2) * grad * grad;
      const double mhat = m[t].data[k] / bc1;
      const double vhat = v[t].data[k] / bc2;
      p[t].data[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
  return lg.loss;
}

std::string format_history(const std::vector<HistoryEntry>& history) {
  std::string out = "epoch,train_loss,val_mean_sensitivity\n";
  for (const auto& h : history) {
    append_csv_row(out, {std::to_string(h.epoch), format_double(h.train_loss),
                         h.val_mean_sensitivity ? format_double(*h.val_mean_sensitivity) : std::string()});
  }
  return out;
}

Eigen::VectorXd predict_replicate_average(const HeadParams& params, const FeatureStore& store, const ManifestRow& row) {
  const int r_count = store.replicates();
  HeadBatch batch;
  batch.features.resize(store.dim(), r_count);
  batch.meta.resize(kMetaDim, r_count);
  batch.labels.assign(static_cast<std::size_t>(r_count), 0);
  const MetaVector meta = encode_meta(row.meta);
  for (int r = 0; r < r_count; ++r) {
    const auto f = store.vector(row.image, r);
    for (int i = 0; i < store.dim(); ++i) batch.features(i, r) = f[static_cast<std::size_t>(i)];
    for (int i = 0; i < kMetaDim; ++i) batch.meta(i, r) = meta[static_cast<std::size_t>(i)];
  }
  const Eigen::MatrixXd logits = head_forward_batch_eval(params, batch);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(logits.rows());
  for (int r = 0; r < r_count; ++r) avg += softmax(logits.col(r));
  return avg / static_cast<double>(r_count);
}

double validation_mean_sensitivity(const HeadParams& params, const FeatureStore& store,
                                   std::span<const ManifestRow> rows) {
  PredictionMatrix preds;
  std::vector<int> labels;
  for (const auto& row : rows) {
    const Eigen::VectorXd p = predict_replicate_average(params, store, row);
    preds.append(row.image, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    labels.push_back(row.label);
  }
  return mean_sensitivity_present(confusion(preds, labels, kKnownClasses));
}

void require_features(const FeatureStore& store, std::span<const ManifestRow> rows) {
  std::vector<std::string> missing;
  for (const auto& row : rows) {
    if (!store.contains(row.image)) missing.push_back(row.image);
  }
  if (missing.empty()) return;
  std::ostringstream msg;
  msg << missing.size() << " image(s) without features:";
  for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg << ' ' << missing[i];
  if (missing.size() > 20) msg << " ...";
  throw PipelineError(ErrorKind::MissingFeatures, msg.str());
}

TrainResult train_head(const FeatureStore& store, std::span<const ManifestRow> train_rows,
                       std::span<const ManifestRow> val_rows, const ClassWeights& weights, const HeadDims& dims,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (dims.features != store.dim()) {
    throw PipelineError(ErrorKind::ShapeMismatch, "head expects F=" + std::to_string(dims.features) +
                                                      " but the feature store has F=" + std::to_string(store.dim()));
  }
  if (train_rows.empty()) throw PipelineError(ErrorKind::InvalidArgument, "no training rows");
  require_features(store, train_rows);
  require_features(store, val_rows);

  Rng root(cfg.seed);
  Rng init_rng = root.split(0);
  HeadParams params = HeadParams::initialize(dims, init_rng);
  if (cfg.freeze_meta) params.zero_meta_path();
  AdamState adam = AdamState::for_params(params);

  TrainResult result;
  result.best = params;
  const std::size_t n = train_rows.size();
  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = root.split(static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      HeadBatch batch;
      batch.features.resize(store.dim(), b);
      batch.meta.resize(kMetaDim, b);
      for (std::size_t k = start; k < end; ++k) {
        const ManifestRow& row = train_rows[order[k]];
        const auto col = static_cast<Eigen::Index>(k - start);
        const int replicate = static_cast<int>(rng.below(static_cast<std::uint64_t>(store.replicates())));
        const auto f = store.vector(row.image, replicate);
        for (int i = 0; i < store.dim(); ++i) batch.features(i, col) = f[static_cast<std::size_t>(i)];
        const MetaVector meta = encode_meta(meta_dropout(row.meta, cfg.meta_dropout_p, rng));
        for (int i = 0; i < kMetaDim; ++i) batch.meta(i, col) = meta[static_cast<std::size_t>(i)];
        batch.labels.push_back(row.label);
      }
      double loss = 0.0;
      try {
        loss = train_step(params, batch, weights, adam, cfg, rng);
      } catch (const PipelineError& e) {
        if (e.kind() != ErrorKind::NonFiniteLoss) throw;
        std::string ids;
        for (std::size_t k = start; k < end; ++k) ids += " " + train_rows[order[k]].image;
        throw PipelineError(ErrorKind::NonFiniteLoss,
                            std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch images:" + ids + ")");
      }
      loss_sum += loss * static_cast<double>(b);
    }

    HistoryEntry entry{epoch, loss_sum / static_cast<double>(n), std::nullopt};
    const bool evaluate = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
    if (evaluate && !val_rows.empty()) {
      const double s = validation_mean_sensitivity(params, store, val_rows);
      entry.val_mean_sensitivity = s;
      if (!result.best_score || s > *result.best_score) {
        result.best_score = s;
        result.best = params;
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(entry);
  }
  result.last = params;
  if (!result.best_score) {
    result.best = params;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

}  // namespace dermpipe
