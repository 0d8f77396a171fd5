#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dermpipe/fusion_head.hpp"
#include "dermpipe/metadata.hpp"
#include "dermpipe/rng.hpp"
#include "head_reference.hpp"

namespace testing {

struct ToyInstance {
  dermpipe::HeadParams params;
  dermpipe::HeadBatch batch;
  std::vector<double> weights;
};

inline dermpipe::MetaRecord random_record(dermpipe::Rng& rng) {
  dermpipe::MetaRecord r;
  if (rng.bernoulli(0.8)) r.age = 5.0 * static_cast<double>(rng.below(18));
  if (rng.bernoulli(0.8)) r.site = static_cast<int>(rng.below(dermpipe::kSiteCount));
  if (rng.bernoulli(0.8)) r.sex = rng.bernoulli(0.5) ? dermpipe::Sex::Male : dermpipe::Sex::Female;
  return r;
}

inline dermpipe::HeadBatch random_batch(dermpipe::Rng& rng, int features, int size) {
  using namespace dermpipe;
  HeadBatch batch;
  batch.features.resize(features, size);
  batch.meta.resize(kMetaDim, size);
  for (int s = 0; s < size; ++s) {
    for (int i = 0; i < features; ++i) batch.features(i, s) = rng.normal();
    const MetaVector m = encode_meta(random_record(rng));
    for (int i = 0; i < kMetaDim; ++i) batch.meta(i, s) = m[static_cast<std::size_t>(i)];
    batch.labels.push_back(static_cast<int>(rng.below(kNumClasses)));
  }
  return batch;
}

// F <= 8, H <= 4, D <= 4 with randomized biases and BN affine terms. For
// Running mode the statistics come from a larger random population, as
// they would after training.
inline ToyInstance random_toy(dermpipe::Rng& rng, dermpipe::BnMode mode, int min_batch = 2, int max_batch = 6) {
  using namespace dermpipe;
  const HeadDims dims{1 + static_cast<int>(rng.below(8)), 1 + static_cast<int>(rng.below(4)),
                      1 + static_cast<int>(rng.below(4)), kNumClasses};
  ToyInstance t{HeadParams::initialize(dims, rng), {}, {}};
  for (auto& view : t.params.tensors()) {
    if (view.name.ends_with(".bias")) {
      for (std::size_t k = 0; k < view.size; ++k) view.data[k] = rng.normal() * 0.5;
    } else if (view.name.ends_with(".gamma")) {
      for (std::size_t k = 0; k < view.size; ++k) view.data[k] = 0.5 + rng.uniform();
    } else if (view.name.ends_with(".beta")) {
      for (std::size_t k = 0; k < view.size; ++k) view.data[k] = rng.uniform() - 0.5;
    }
  }
  t.batch = random_batch(rng, dims.features, min_batch + static_cast<int>(rng.below(max_batch - min_batch + 1)));
  for (int c = 0; c < kNumClasses; ++c) t.weights.push_back(0.5 + 4.5 * rng.uniform());
  if (mode == BnMode::Running) {
    PassConfig fill;
    fill.bn_momentum = 1.0;
    fill.update_running_stats = true;
    head_forward_batch(t.params, random_batch(rng, dims.features, 64), fill, nullptr);
  }
  return t;
}

enum class Stencil { Central2, Central4 };

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Some perturbation flipped a ReLU, so the loss is not smooth on the
  // probed interval and the comparison is meaningless.
  bool straddles_kink = false;
};

// Relative error |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline constexpr double kGradFloor = 1e-6;

inline GradCheck gradient_check(const ToyInstance& toy, dermpipe::BnMode mode, double eps = 1e-3,
                                Stencil stencil = Stencil::Central2) {
  using namespace dermpipe;
  const bool batch_stats = mode == BnMode::Batch;
  HeadParams params = toy.params;
  PassConfig pass;
  pass.bn = mode;
  const LossAndGradients lg = head_loss_and_gradients(params, toy.batch, toy.weights, pass, nullptr);
  const std::vector<char> pattern = reference_forward(params, toy.batch, toy.weights, batch_stats).active;
  const auto grads = lg.gradients.tensors();
  auto views = params.tensors();
  GradCheck out;
  for (std::size_t t = 0; t < views.size(); ++t) {
    if (!views[t].trainable) continue;
    for (std::size_t k = 0; k < views[t].size; ++k) {
      double& w = views[t].data[k];
      const double saved = w;
      const auto loss_at = [&](double step) {
        w = saved + step;
        const ReferencePass r = reference_forward(params, toy.batch, toy.weights, batch_stats);
        if (r.active != pattern) out.straddles_kink = true;
        return r.loss;
      };
      double numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
      if (stencil == Stencil::Central4) {
        numeric = (8.0 * numeric * 2.0 * eps - (loss_at(2 * eps) - loss_at(-2 * eps))) / (12.0 * eps);
      }
      w = saved;
      const double analytic = grads[t].data[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
      ++out.coordinates;
    }
  }
  return out;
}

}  // namespace testing
