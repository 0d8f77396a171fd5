#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dermpipe/dataset.hpp"

namespace dermpipe {

// N × 9 row-stochastic softmax outputs keyed by image id.
struct PredictionMatrix {
  std::vector<std::string> ids;
  std::vector<double> probs;  // row-major, kNumClasses per row

  std::size_t rows() const { return ids.size(); }
  std::span<const double> row(std::size_t i) const { return {probs.data() + i * kNumClasses, kNumClasses}; }
  std::span<double> row(std::size_t i) { return {probs.data() + i * kNumClasses, kNumClasses}; }
  void append(const std::string& id, std::span<const double> p);

  // Entries in [0,1] and rows summing to 1 within tol; throws InvalidArgument.
  void validate(double tol = 1e-6) const;
};

// Header image,MEL,NV,BCC,AK,BKL,DF,VASC,SCC,UNK; 9 decimal places.
std::string format_prediction_csv(const PredictionMatrix& preds);
PredictionMatrix parse_prediction_csv(std::string_view text, std::string_view source_name = "<predictions>");
PredictionMatrix read_prediction_csv(const std::string& path);

// Lowest index wins ties.
int argmax(std::span<const double> values);

}  // namespace dermpipe
