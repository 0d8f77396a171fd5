#include "dermpipe/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "dermpipe/csv.hpp"
#include "dermpipe/errors.hpp"

namespace dermpipe {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw PipelineError(ErrorKind::InvalidArgument, "confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * (classes + 1), 0);
}

std::size_t ConfusionMatrix::index(int truth, int predicted) const {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted > classes_) {
    throw PipelineError(ErrorKind::InvalidArgument, "confusion index out of range");
  }
  return static_cast<std::size_t>(truth) * (classes_ + 1) + predicted;
}

std::int64_t ConfusionMatrix::row_total(int truth) const {
  std::int64_t sum = 0;
  for (int p = 0; p <= classes_; ++p) sum += at(truth, p);
  return sum;
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

ConfusionMatrix confusion(const PredictionMatrix& preds, std::span<const int> labels, int classes) {
  if (labels.size() != preds.rows()) throw PipelineError(ErrorKind::ShapeMismatch, "label count differs from predictions");
  ConfusionMatrix conf(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw PipelineError(ErrorKind::UnknownLabel, "image '" + preds.ids[i] + "' has a label outside the evaluated classes");
    }
    const int predicted = argmax(preds.row(i));
    conf.add(labels[i], predicted < classes ? predicted : conf.rejected_column());
  }
  return conf;
}

double mean_sensitivity(const ConfusionMatrix& conf) {
  double sum = 0.0;
  for (int c = 0; c < conf.classes(); ++c) {
    const auto n = conf.row_total(c);
    if (n == 0) throw PipelineError(ErrorKind::EmptyClassRow, "class " + std::to_string(c) + " has no samples");
    sum += static_cast<double>(conf.at(c, c)) / static_cast<double>(n);
  }
  return sum / conf.classes();
}

double mean_sensitivity_present(const ConfusionMatrix& conf) {
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < conf.classes(); ++c) {
    const auto n = conf.row_total(c);
    if (n == 0) continue;
    sum += static_cast<double>(conf.at(c, c)) / static_cast<double>(n);
    ++present;
  }
  if (present == 0) throw PipelineError(ErrorKind::EmptyClassRow, "no class has samples");
  return sum / present;
}

namespace {

void check_binary(std::span<const double> scores, std::span<const int> positive, std::size_t& n_pos,
                  std::size_t& n_neg) {
  if (scores.size() != positive.size()) throw PipelineError(ErrorKind::ShapeMismatch, "scores and labels differ in length");
  n_pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](int v) { return v != 0; }));
  n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw PipelineError(ErrorKind::SingleClassLabels, "AUC needs at least one positive and one negative");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> positive) {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  check_binary(scores, positive, n_pos, n_neg);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney with midranks for ties.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_above_sensitivity(std::span<const double> scores, std::span<const int> positive, double floor,
                             AucSScale scale) {
  if (!(floor >= 0.0 && floor < 1.0)) throw PipelineError(ErrorKind::InvalidArgument, "sensitivity floor must lie in [0,1)");
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  check_binary(scores, positive, n_pos, n_neg);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Walk thresholds from high to low; tied scores form one diagonal step.
  double area = 0.0;
  double fpr0 = 0.0;
  double tpr0 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    const double fpr1 = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double tpr1 = static_cast<double>(tp) / static_cast<double>(n_pos);
    if (tpr1 > tpr0 && tpr1 > floor) {
      const double ta = std::max(tpr0, floor);
      const double slope = (fpr1 - fpr0) / (tpr1 - tpr0);
      const double fa = fpr0 + slope * (ta - tpr0);
      area += (tpr1 - ta) * (1.0 - 0.5 * (fa + fpr1));
    }
    fpr0 = fpr1;
    tpr0 = tpr1;
    i = j;
  }

  if (scale == AucSScale::Raw) return area;
  const double width = 1.0 - floor;
  const double min_area = 0.5 * width * width;
  const double max_area = width;
  return 0.5 * (1.0 + (area - min_area) / (max_area - min_area));
}

std::vector<ClassMetrics> per_class_metrics(const PredictionMatrix& preds, std::span<const int> labels,
                                            double auc_s_floor) {
  if (labels.size() != preds.rows()) throw PipelineError(ErrorKind::ShapeMismatch, "label count differs from predictions");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= kNumClasses) {
      throw PipelineError(ErrorKind::UnknownLabel, "image '" + preds.ids[i] + "' has an invalid label");
    }
  }
  std::vector<int> predicted(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) predicted[i] = argmax(preds.row(i));

  std::vector<ClassMetrics> report(kNumClasses);
  std::vector<double> column(labels.size());
  std::vector<int> is_pos(labels.size());
  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool pos = labels[i] == c;
      const bool hit = predicted[i] == c;
      is_pos[i] = pos ? 1 : 0;
      column[i] = preds.row(i)[c];
      if (pos) {
        hit ? ++tp : ++fn;
      } else {
        hit ? ++fp : ++tn;
      }
    }
    auto& m = report[c];
    if (tp + fn > 0) m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tn + fp > 0) m.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    if (tp + fn > 0 && tn + fp > 0) {
      m.auc = roc_auc(column, is_pos);
      m.auc_s = auc_above_sensitivity(column, is_pos, auc_s_floor, AucSScale::Standardized);
      m.auc_s_raw = auc_above_sensitivity(column, is_pos, auc_s_floor, AucSScale::Raw);
    }
  }
  return report;
}

std::string format_class_report(const std::vector<ClassMetrics>& report, bool include_raw_auc_s) {
  std::string out = include_raw_auc_s ? "class,auc,auc_s,auc_s_raw,sensitivity,specificity\n"
                                      : "class,auc,auc_s,sensitivity,specificity\n";
  const auto cell = [](const std::optional<double>& v) { return v ? format_fixed(*v, 6) : std::string(); };
  for (std::size_t c = 0; c < report.size(); ++c) {
    std::vector<std::string> fields{std::string(kClassNames.at(c)), cell(report[c].auc), cell(report[c].auc_s)};
    if (include_raw_auc_s) fields.push_back(cell(report[c].auc_s_raw));
    fields.push_back(cell(report[c].sensitivity));
    fields.push_back(cell(report[c].specificity));
    append_csv_row(out, fields);
  }
  return out;
}

}  // namespace dermpipe
