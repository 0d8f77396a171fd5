#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dermpipe/fusion_head.hpp"

namespace testing {

// Loop-based forward pass of the fusion head, written independently of the
// library's Eigen implementation. Dropout is off.
struct ReferencePass {
  double loss = 0.0;
  std::vector<std::vector<double>> logits;  // per sample
  double min_abs_preactivation = std::numeric_limits<double>::infinity();
  std::vector<char> active;  // ReLU pattern, every unit of every sample
};

using Columns = std::vector<std::vector<double>>;  // per sample

inline Columns reference_block(const dermpipe::DenseLayer& dense, const dermpipe::BatchNormLayer& bn, const Columns& x,
                               bool batch_stats, ReferencePass& r) {
  const auto out = static_cast<std::size_t>(dense.weight.rows());
  const auto in = static_cast<std::size_t>(dense.weight.cols());
  const std::size_t b = x.size();
  Columns z(b, std::vector<double>(out));
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < out; ++i) {
      double acc = dense.bias(static_cast<Eigen::Index>(i));
      for (std::size_t k = 0; k < in; ++k) acc += dense.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * x[s][k];
      z[s][i] = acc;
    }
  }
  Columns y(b, std::vector<double>(out));
  for (std::size_t i = 0; i < out; ++i) {
    double mean = bn.running_mean(static_cast<Eigen::Index>(i));
    double var = bn.running_var(static_cast<Eigen::Index>(i));
    if (batch_stats) {
      mean = 0.0;
      for (std::size_t s = 0; s < b; ++s) mean += z[s][i];
      mean /= static_cast<double>(b);
      var = 0.0;
      for (std::size_t s = 0; s < b; ++s) var += (z[s][i] - mean) * (z[s][i] - mean);
      var /= static_cast<double>(b);
    }
    for (std::size_t s = 0; s < b; ++s) {
      const double a = bn.gamma(static_cast<Eigen::Index>(i)) * (z[s][i] - mean) / std::sqrt(var + 1e-5) +
                       bn.beta(static_cast<Eigen::Index>(i));
      r.min_abs_preactivation = std::min(r.min_abs_preactivation, std::abs(a));
      r.active.push_back(a > 0.0 ? 1 : 0);
      y[s][i] = a > 0.0 ? a : 0.0;
    }
  }
  return y;
}

inline ReferencePass reference_forward(const dermpipe::HeadParams& p, const dermpipe::HeadBatch& batch,
                                       const std::vector<double>& weights, bool batch_stats) {
  ReferencePass r;
  const std::size_t b = static_cast<std::size_t>(batch.size());
  Columns meta(b), feats(b);
  for (std::size_t s = 0; s < b; ++s) {
    for (Eigen::Index i = 0; i < batch.meta.rows(); ++i) meta[s].push_back(batch.meta(i, static_cast<Eigen::Index>(s)));
    for (Eigen::Index i = 0; i < batch.features.rows(); ++i) feats[s].push_back(batch.features(i, static_cast<Eigen::Index>(s)));
  }
  const Columns m1 = reference_block(p.meta1, p.meta1_bn, meta, batch_stats, r);
  const Columns m2 = reference_block(p.meta2, p.meta2_bn, m1, batch_stats, r);
  Columns cat = feats;
  for (std::size_t s = 0; s < b; ++s) cat[s].insert(cat[s].end(), m2[s].begin(), m2[s].end());
  const Columns fused = reference_block(p.fuse, p.fuse_bn, cat, batch_stats, r);
  for (std::size_t s = 0; s < b; ++s) {
    std::vector<double> z(static_cast<std::size_t>(p.classifier.weight.rows()));
    for (std::size_t k = 0; k < z.size(); ++k) {
      double acc = p.classifier.bias(static_cast<Eigen::Index>(k));
      for (std::size_t d = 0; d < fused[s].size(); ++d) {
        acc += p.classifier.weight(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) * fused[s][d];
      }
      z[k] = acc;
    }
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    const int y = batch.labels[s];
    r.loss += weights[static_cast<std::size_t>(y)] * (std::log(denom) - z[static_cast<std::size_t>(y)]);
    r.logits.push_back(z);
  }
  r.loss /= static_cast<double>(b);
  return r;
}

}  // namespace testing
