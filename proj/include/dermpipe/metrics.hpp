#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dermpipe/dataset.hpp"
#include "dermpipe/predictions.hpp"

namespace dermpipe {

// Rows are true classes, columns predicted classes, plus one trailing
// "rejected" column collecting argmax hits outside the evaluated classes
// (UNK for eight-class evaluation).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = kKnownClasses);

  int classes() const { return classes_; }
  int rejected_column() const { return classes_; }
  std::int64_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
  void add(int truth, int predicted, std::int64_t n = 1) { counts_[index(truth, predicted)] += n; }
  std::int64_t row_total(int truth) const;
  std::int64_t total() const;

 private:
  std::size_t index(int truth, int predicted) const;

  int classes_;
  std::vector<std::int64_t> counts_;
};

// Argmax over all nine columns; predictions at or beyond `classes` land in
// the rejected column. Throws UnknownLabel for labels outside [0, classes).
ConfusionMatrix confusion(const PredictionMatrix& preds, std::span<const int> labels, int classes = kKnownClasses);

// (1/C) Σ TP_i / (TP_i + FN_i). Throws EmptyClassRow if a row is empty.
double mean_sensitivity(const ConfusionMatrix& conf);
// Same, averaged only over rows with at least one sample.
double mean_sensitivity_present(const ConfusionMatrix& conf);

// P(score_pos > score_neg) + ½ P(tie). Throws SingleClassLabels.
double roc_auc(std::span<const double> scores, std::span<const int> positive);

enum class AucSScale {
  // McClish standardization: a chance-level curve scores 0.5, a perfect one 1.
  Standardized,
  // The bare area of the ROC region with TPR >= floor.
  Raw,
};

// ROC area over the region TPR >= floor, measured as ∫ (1 - FPR) dTPR on the
// piecewise-linear ROC curve. floor in [0, 1).
double auc_above_sensitivity(std::span<const double> scores, std::span<const int> positive, double floor = 0.8,
                             AucSScale scale = AucSScale::Standardized);

struct ClassMetrics {
  std::optional<double> auc;
  std::optional<double> auc_s;
  std::optional<double> auc_s_raw;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

// One-vs-rest metrics per class (all nine columns). Undefined entries stay
// empty: AUC needs positives and negatives, sensitivity needs positives,
// specificity needs negatives.
std::vector<ClassMetrics> per_class_metrics(const PredictionMatrix& preds, std::span<const int> labels,
                                            double auc_s_floor = 0.8);

std::string format_class_report(const std::vector<ClassMetrics>& report, bool include_raw_auc_s = false);

}  // namespace dermpipe
