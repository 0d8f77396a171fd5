#include "doctest.h"

#include <cmath>
#include <vector>

#include "dermpipe/errors.hpp"
#include "dermpipe/metrics.hpp"
#include "dermpipe/rng.hpp"
#include "metric_oracle.hpp"

using namespace dermpipe;

namespace {

std::vector<double> one_hot(int c) {
  std::vector<double> p(kNumClasses, 0.0);
  p[static_cast<std::size_t>(c)] = 1.0;
  return p;
}

PredictionMatrix from_argmax(const std::vector<int>& predicted) {
  PredictionMatrix m;
  for (std::size_t i = 0; i < predicted.size(); ++i) m.append("img" + std::to_string(i), one_hot(predicted[i]));
  return m;
}

std::pair<std::vector<double>, std::vector<int>> random_binary(Rng& rng, std::size_t max_n) {
  for (;;) {
    const std::size_t n = 2 + rng.below(max_n - 1);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = rng.bernoulli(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
      s[i] = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform() + 0.3 * y[i];
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos > 0 && pos < static_cast<long>(n)) return {s, y};
  }
}

}  // namespace

TEST_CASE("confusion matrix and mean sensitivity examples") {
  const std::vector<int> labels{0, 0, 1, 1};
  const ConfusionMatrix conf = confusion(from_argmax({0, 1, 1, 1}), labels, 2);
  CHECK(conf.at(0, 0) == 1);
  CHECK(conf.at(0, 1) == 1);
  CHECK(conf.at(1, 1) == 2);
  CHECK(mean_sensitivity(conf) == doctest::Approx(0.75).epsilon(1e-15));

  const std::vector<int> eight{0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(mean_sensitivity(confusion(from_argmax(eight), eight)) == 1.0);
}

TEST_CASE("argmax on the unknown column lands in the rejected column") {
  const std::vector<int> labels{0, 1};
  const ConfusionMatrix conf = confusion(from_argmax({8, 1}), labels);
  CHECK(conf.at(0, conf.rejected_column()) == 1);
  CHECK(conf.row_total(0) == 1);
  CHECK(mean_sensitivity_present(conf) == 0.5);
  CHECK_THROWS_AS(mean_sensitivity(conf), PipelineError);
}

TEST_CASE("invalid labels and empty rows are reported") {
  try {
    const std::vector<int> labels{8};
    confusion(from_argmax({0}), labels);
    FAIL("expected UnknownLabel");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == ErrorKind::UnknownLabel);
  }
  try {
    mean_sensitivity(ConfusionMatrix(3));
    FAIL("expected EmptyClassRow");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == ErrorKind::EmptyClassRow);
  }
}

TEST_CASE("uniform random predictions score about one over the class count") {
  Rng rng(40);
  PredictionMatrix preds;
  std::vector<int> labels;
  for (int i = 0; i < 90000; ++i) {
    std::vector<double> p(kNumClasses);
    double sum = 0.0;
    for (auto& v : p) sum += (v = rng.uniform());
    for (auto& v : p) v /= sum;
    preds.append("i" + std::to_string(i), p);
    labels.push_back(i % kNumClasses);
  }
  const double s = mean_sensitivity(confusion(preds, labels, kNumClasses));
  CHECK(std::abs(s - 1.0 / kNumClasses) < 0.01);
}

TEST_CASE("AUC examples") {
  CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{0, 1, 0, 1}) == 0.5);
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<int>{1, 0, 1, 0}) == 0.75);
  try {
    roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL("expected SingleClassLabels");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == ErrorKind::SingleClassLabels);
  }
}

TEST_CASE("AUC above a sensitivity floor: anchor values") {
  const std::vector<double> perfect{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(auc_above_sensitivity(perfect, y) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(auc_above_sensitivity(perfect, y, 0.8, AucSScale::Raw) == doctest::Approx(0.2).epsilon(1e-15));
  const std::vector<double> flat(4, 0.3);
  CHECK(auc_above_sensitivity(flat, y) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(auc_above_sensitivity(flat, y, 0.8, AucSScale::Raw) == doctest::Approx(0.02).epsilon(1e-12));
  const std::vector<double> inverted{0.9, 0.8, 0.2, 0.1};
  CHECK(auc_above_sensitivity(inverted, y, 0.8, AucSScale::Raw) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(auc_above_sensitivity(perfect, y, 1.0), PipelineError);
}

TEST_CASE("AUC above a sensitivity floor: five-threshold hand case") {
  // ROC vertices (0,1/3) (1/2,1/3) (1/2,2/3) (1/2,1) (1,1); above TPR 0.8 the
  // curve sits at FPR 1/2, so the raw area is 0.2 * 0.5.
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5};
  const std::vector<int> y{1, 0, 1, 1, 0};
  CHECK(auc_above_sensitivity(s, y, 0.8, AucSScale::Raw) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(auc_above_sensitivity(s, y) == doctest::Approx(0.5 * (1.0 + (0.1 - 0.02) / (0.2 - 0.02))).epsilon(1e-12));
}

TEST_CASE("metric oracles on random small instances") {
  Rng rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [s, y] = random_binary(rng, 50);
    const double floor = trial % 3 == 0 ? 0.8 : rng.uniform() * 0.95;
    CHECK(std::abs(roc_auc(s, y) - testing::brute_auc(s, y)) <= 1e-9);
    const double raw = auc_above_sensitivity(s, y, floor, AucSScale::Raw);
    CHECK(std::abs(raw - testing::brute_auc_above(s, y, floor)) <= 1e-9);
    CHECK(std::abs(auc_above_sensitivity(s, y, floor) - testing::mcclish(raw, floor)) <= 1e-9);
    CHECK(std::abs(auc_above_sensitivity(s, y, 0.0) - roc_auc(s, y)) <= 1e-9);
  }
}

TEST_CASE("rank metrics are invariant to increasing transforms and antisymmetric") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const auto [s, y] = random_binary(rng, 60);
    std::vector<double> t(s.size()), neg(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      t[i] = std::exp(3.0 * s[i]) + s[i] * s[i] * s[i];
      neg[i] = -s[i];
    }
    CHECK(roc_auc(t, y) == roc_auc(s, y));
    CHECK(auc_above_sensitivity(t, y) == auc_above_sensitivity(s, y));
    CHECK(std::abs(roc_auc(s, y) + roc_auc(neg, y) - 1.0) <= 1e-12);
  }
}

TEST_CASE("S equals the mean of per-class sensitivities from the class report") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    PredictionMatrix preds;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
      const int label = i % kKnownClasses;
      std::vector<double> p(kNumClasses);
      double sum = 0.0;
      for (int c = 0; c < kNumClasses; ++c) sum += (p[static_cast<std::size_t>(c)] = rng.uniform() + (c == label ? 0.4 : 0.0));
      for (auto& v : p) v /= sum;
      preds.append("i" + std::to_string(i), p);
      labels.push_back(label);
    }
    const auto report = per_class_metrics(preds, labels);
    double mean = 0.0;
    for (int c = 0; c < kKnownClasses; ++c) mean += *report[static_cast<std::size_t>(c)].sensitivity;
    mean /= kKnownClasses;
    CHECK(std::abs(mean - mean_sensitivity(confusion(preds, labels))) <= 1e-12);
    CHECK_FALSE(report[kUnknownClass].sensitivity.has_value());
    CHECK_FALSE(report[kUnknownClass].auc.has_value());
    CHECK(report[kUnknownClass].specificity.has_value());
  }
}

TEST_CASE("class report layout") {
  const std::vector<int> labels{0, 0, 1, 1};
  PredictionMatrix preds;
  preds.append("a", one_hot(0));
  preds.append("b", one_hot(1));
  preds.append("c", one_hot(1));
  preds.append("d", one_hot(1));
  const std::string text = format_class_report(per_class_metrics(preds, labels));
  CHECK(text.starts_with("class,auc,auc_s,sensitivity,specificity\nMEL,0.750000,"));
  CHECK(text.find("\nUNK,,,,1.000000\n") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 10);
  const std::string raw = format_class_report(per_class_metrics(preds, labels), true);
  CHECK(raw.starts_with("class,auc,auc_s,auc_s_raw,sensitivity,specificity\n"));
}
