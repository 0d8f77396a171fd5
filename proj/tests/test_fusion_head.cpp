#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "dermpipe/dataset.hpp"
#include "dermpipe/errors.hpp"
#include "dermpipe/fusion_head.hpp"
#include "dermpipe/rng.hpp"
#include "dermpipe/synth.hpp"
#include "gradient_check.hpp"
#include "head_reference.hpp"

using namespace dermpipe;

namespace {

std::vector<double> unit_weights() { return std::vector<double>(kNumClasses, 1.0); }

// Draws toys until one has no ReLU flip under the probe perturbations.
testing::GradCheck smooth_check(Rng& rng, BnMode mode, int min_batch, int max_batch, double eps,
                                testing::Stencil stencil) {
  for (;;) {
    const testing::ToyInstance toy = testing::random_toy(rng, mode, min_batch, max_batch);
    const testing::GradCheck gc = testing::gradient_check(toy, mode, eps, stencil);
    if (!gc.straddles_kink) return gc;
  }
}

struct SmallTask {
  SynthCorpus corpus;
  TrainValRows rows;
  ClassWeights weights{};
  HeadDims dims;
};

SmallTask small_task(std::uint64_t seed) {
  SynthOptions o;
  o.images = 160;
  o.features = 16;
  o.render_images = false;
  SmallTask t{generate_synthetic(seed, o), {}, {}, {}};
  const FoldSplit split = split_folds(t.corpus.train, 5, seed);
  t.rows = assemble_training_set(split.assignment, t.corpus.train, 0);
  t.weights = training_class_weights(t.rows.train, 0.5).weights;
  t.dims = HeadDims{o.features, 32, 128, kNumClasses};
  return t;
}

TrainConfig fast_config() {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 1e-3;
  cfg.eval_every = 4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("all-zero head yields zero logits in both modes") {
  const HeadParams p = HeadParams::zeros({4, 3, 5, kNumClasses});
  const std::vector<double> f{1.0, -2.0, 0.5, 7.0};
  const MetaVector meta = encode_meta({40.0, 1, Sex::Male});
  CHECK(head_forward(p, f, meta, HeadMode::Eval, nullptr).isZero(0.0));
  Rng rng(3);
  CHECK(head_forward(p, f, meta, HeadMode::Train, &rng).isZero(0.0));
}

TEST_CASE("eval mode is deterministic and ignores the rng") {
  Rng init(11);
  const HeadParams p = HeadParams::initialize({6, 4, 8, kNumClasses}, init);
  const std::vector<double> f{0.1, 0.2, -0.3, 0.4, 0.5, -0.6};
  const MetaVector meta = encode_meta({55.0, 3, Sex::Female});
  Rng a(1), b(2);
  const Eigen::VectorXd x = head_forward(p, f, meta, HeadMode::Eval, &a);
  const Eigen::VectorXd y = head_forward(p, f, meta, HeadMode::Eval, &b);
  CHECK(x == y);
  CHECK(x == head_forward(p, f, meta, HeadMode::Eval, nullptr));
}

TEST_CASE("hand-built head matches a closed-form forward pass") {
  HeadParams p = HeadParams::zeros({3, 2, 2, kNumClasses});
  p.meta1.weight(0, 10) = 1.0 / 30.0;
  p.meta1.weight(1, 2) = 1.0;
  p.meta2.weight = RowMatrix::Identity(2, 2);
  p.fuse.weight(0, 0) = 1.0;
  p.fuse.weight(0, 3) = 1.0;
  p.fuse.weight(1, 1) = 1.0;
  p.fuse.weight(1, 4) = -1.0;
  for (int k = 0; k < kNumClasses; ++k) {
    p.classifier.weight(k, 0) = 0.1 * k;
    p.classifier.weight(k, 1) = -0.2;
    p.classifier.bias(k) = 0.01 * k;
  }
  const double s = std::sqrt(1.0 + 1e-5);
  const std::vector<double> f{1.0, 2.0, 3.0};
  const Eigen::VectorXd logits = head_forward(p, f, encode_meta({60.0, 2, std::nullopt}), HeadMode::Eval, nullptr);
  const double m2a = 2.0 / (s * s);
  const double m2b = 1.0 / (s * s);
  const double u0 = (1.0 + m2a) / s;
  const double u1 = (2.0 - m2b) / s;
  REQUIRE(logits.size() == kNumClasses);
  for (int k = 0; k < kNumClasses; ++k) CHECK(logits(k) == doctest::Approx(0.1 * k * u0 - 0.2 * u1 + 0.01 * k).epsilon(1e-12));
}

TEST_CASE("library batch pass agrees with the loop reference") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    for (BnMode mode : {BnMode::Batch, BnMode::Running}) {
      testing::ToyInstance toy = testing::random_toy(rng, mode, 2, 6);
      PassConfig pass;
      pass.bn = mode;
      const Eigen::MatrixXd logits = head_forward_batch(toy.params, toy.batch, pass, nullptr);
      const auto ref = testing::reference_forward(toy.params, toy.batch, toy.weights, mode == BnMode::Batch);
      const LossAndGradients lg = head_loss_and_gradients(toy.params, toy.batch, toy.weights, pass, nullptr);
      CHECK(lg.loss == doctest::Approx(ref.loss).epsilon(1e-10));
      for (int s = 0; s < toy.batch.size(); ++s) {
        for (int k = 0; k < kNumClasses; ++k) {
          CHECK(logits(k, s) == doctest::Approx(ref.logits[s][k]).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd z(kNumClasses);
    for (int k = 0; k < kNumClasses; ++k) z(k) = 20.0 * rng.normal();
    const Eigen::VectorXd p = softmax(z);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((p.array() >= 0.0).all());
    const Eigen::VectorXd q = softmax((z.array() + 123.0).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
  }
  Eigen::VectorXd big = Eigen::VectorXd::Constant(kNumClasses, 1000.0);
  big(0) = 1001.0;
  CHECK(softmax(big).allFinite());
}

TEST_CASE("weighted cross-entropy examples") {
  const Eigen::VectorXd flat = Eigen::VectorXd::Zero(kNumClasses);
  std::vector<double> w = unit_weights();
  CHECK(weighted_cross_entropy(flat, 0, w) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  w[4] = 3.0;
  CHECK(weighted_cross_entropy(flat, 4, w) == doctest::Approx(3.0 * std::log(9.0)).epsilon(1e-12));
  Eigen::VectorXd sharp = Eigen::VectorXd::Zero(kNumClasses);
  sharp(2) = 20.0;
  CHECK(weighted_cross_entropy(sharp, 2, unit_weights()) < 1e-4);
  CHECK_THROWS_AS(weighted_cross_entropy(flat, 0, std::vector<double>(3, 1.0)), PipelineError);
}

TEST_CASE("gradients match central differences with frozen statistics") {
  Rng rng(2024);
  for (int i = 0; i < 30; ++i) {
    const testing::GradCheck gc = smooth_check(rng, BnMode::Running, 2, 6, 1e-5, testing::Stencil::Central2);
    CHECK(gc.coordinates > 0);
    CHECK(gc.max_rel_error <= 1e-4);
  }
}

TEST_CASE("gradients match a four-point stencil with batch statistics") {
  Rng rng(77);
  for (int i = 0; i < 30; ++i) {
    const testing::GradCheck gc = smooth_check(rng, BnMode::Batch, 4, 8, 1e-3, testing::Stencil::Central4);
    CHECK(gc.max_rel_error <= 2e-3);
  }
}

TEST_CASE("zero learning rate leaves every trainable tensor unchanged") {
  Rng rng(8);
  testing::ToyInstance toy = testing::random_toy(rng, BnMode::Batch, 4, 6);
  HeadParams p = toy.params;
  AdamState adam = AdamState::for_params(p);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  for (int i = 0; i < 5; ++i) train_step(p, toy.batch, toy.weights, adam, cfg, rng);
  const auto before = toy.params.tensors();
  const auto after = p.tensors();
  for (std::size_t t = 0; t < before.size(); ++t) {
    if (!before[t].trainable) continue;
    for (std::size_t k = 0; k < before[t].size; ++k) CHECK(before[t].data[k] == after[t].data[k]);
  }
  CHECK(adam.step == 5);
}

TEST_CASE("loss does not increase on a single repeated example") {
  Rng rng(9);
  HeadParams p = HeadParams::initialize({5, 4, 6, kNumClasses}, rng);
  HeadBatch batch = testing::random_batch(rng, 5, 1);
  AdamState adam = AdamState::for_params(p);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.dropout_p = 0.0;
  const std::vector<double> w = unit_weights();
  double previous = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    const double loss = train_step(p, batch, w, adam, cfg, rng);
    CHECK(loss <= previous + 1e-12);
    previous = loss;
  }
  CHECK(previous < std::log(9.0));
}

TEST_CASE("non-finite inputs raise NonFiniteLoss") {
  Rng rng(10);
  HeadParams p = HeadParams::initialize({3, 2, 2, kNumClasses}, rng);
  HeadBatch batch = testing::random_batch(rng, 3, 4);
  batch.features(1, 2) = std::numeric_limits<double>::quiet_NaN();
  AdamState adam = AdamState::for_params(p);
  TrainConfig cfg;
  try {
    train_step(p, batch, unit_weights(), adam, cfg, rng);
    FAIL("expected NonFiniteLoss");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteLoss);
  }
}

TEST_CASE("shape mismatches are rejected") {
  const HeadParams p = HeadParams::zeros({4, 2, 2, kNumClasses});
  const std::vector<double> f(5, 0.0);
  try {
    head_forward(p, f, MetaVector{}, HeadMode::Eval, nullptr);
    FAIL("expected ShapeMismatch");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
  Rng rng(1);
  HeadBatch batch = testing::random_batch(rng, 3, 2);
  CHECK_THROWS_AS(head_forward_batch_eval(p, batch), PipelineError);
}

TEST_CASE("train_head separates a synthetic corpus") {
  const SmallTask t = small_task(31);
  const TrainResult r = train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, t.dims, fast_config());
  REQUIRE(r.best_score.has_value());
  CHECK(*r.best_score >= 0.95);
  CHECK(r.history.size() == 40);
  CHECK(r.history[3].val_mean_sensitivity.has_value());
  CHECK_FALSE(r.history[2].val_mean_sensitivity.has_value());
  CHECK(validation_mean_sensitivity(r.best, t.corpus.train_features, t.rows.val) == *r.best_score);
}

TEST_CASE("training is reproducible and leaves the feature store untouched") {
  const SmallTask t = small_task(32);
  const FeatureStore before = t.corpus.train_features;
  TrainConfig cfg = fast_config();
  cfg.epochs = 3;
  const TrainResult a = train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, t.dims, cfg);
  const TrainResult b = train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, t.dims, cfg);
  CHECK(serialize_checkpoint(a.best) == serialize_checkpoint(b.best));
  CHECK(serialize_checkpoint(a.last) == serialize_checkpoint(b.last));
  CHECK(format_history(a.history) == format_history(b.history));
  CHECK(t.corpus.train_features == before);
  cfg.seed += 1;
  const TrainResult c = train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, t.dims, cfg);
  CHECK(serialize_checkpoint(a.last) != serialize_checkpoint(c.last));
}

TEST_CASE("best equals last when no evaluation precedes the final epoch") {
  const SmallTask t = small_task(33);
  TrainConfig cfg = fast_config();
  cfg.epochs = 3;
  cfg.eval_every = 10;
  const TrainResult r = train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, t.dims, cfg);
  CHECK(r.best_epoch == 3);
  CHECK(r.best == r.last);
}

TEST_CASE("frozen zeroed meta path makes predictions independent of meta data") {
  const SmallTask t = small_task(34);
  TrainConfig cfg = fast_config();
  cfg.epochs = 2;
  cfg.freeze_meta = true;
  const TrainResult r = train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, t.dims, cfg);
  CHECK(r.last.meta1.weight.isZero(0.0));
  CHECK(r.last.meta2.bias.isZero(0.0));
  ManifestRow row = t.rows.val.front();
  const Eigen::VectorXd base = predict_replicate_average(r.last, t.corpus.train_features, row);
  row.meta = {80.0, 5, Sex::Male};
  CHECK((predict_replicate_average(r.last, t.corpus.train_features, row) - base).cwiseAbs().maxCoeff() == 0.0);
  row.meta = {};
  CHECK((predict_replicate_average(r.last, t.corpus.train_features, row) - base).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("missing features and mismatched dimensions fail before training") {
  const SmallTask t = small_task(35);
  std::vector<ManifestRow> rows = t.rows.train;
  rows.push_back(rows.front());
  rows.back().image = "NOT_THERE";
  try {
    train_head(t.corpus.train_features, rows, t.rows.val, t.weights, t.dims, fast_config());
    FAIL("expected MissingFeatures");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == ErrorKind::MissingFeatures);
    CHECK(std::string(e.what()).find("NOT_THERE") != std::string::npos);
  }
  HeadDims wrong = t.dims;
  wrong.features += 1;
  CHECK_THROWS_AS(train_head(t.corpus.train_features, t.rows.train, t.rows.val, t.weights, wrong, fast_config()),
                  PipelineError);
}
