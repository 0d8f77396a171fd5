#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dermpipe/predictions.hpp"

namespace dermpipe {

// One training recipe instantiated as m per-fold models.
struct Configuration {
  std::string name;
  // Fold j's model evaluated on fold j's validation images.
  std::vector<PredictionMatrix> validation;
  // Fold j's model evaluated on the test images (may be empty).
  std::vector<PredictionMatrix> test;
};

using ConfigurationSet = std::vector<Configuration>;

enum class EnsembleTarget { Validation, Test };

// Validation: per image, the mean over configurations of that image's
// fold-specific prediction, folds concatenated in order. Test: the mean over
// configurations and their m fold models. Rows follow the first selected
// configuration's order. Throws IdMismatch when image sets differ.
PredictionMatrix ensemble_average(std::span<const std::size_t> subset, const ConfigurationSet& cfgs,
                                  EnsembleTarget target);

enum class SubsetScoring {
  Pooled,       // one S over all validation folds concatenated
  PerFoldMean,  // mean of the per-fold S values
};

struct SubsetScore {
  std::vector<std::size_t> subset;
  double score = 0.0;
};

struct SearchResult {
  std::vector<std::size_t> subset;
  double score = 0.0;
  // Every non-empty subset in bitmask order when requested.
  std::vector<SubsetScore> all;
};

struct SearchOptions {
  SubsetScoring scoring = SubsetScoring::Pooled;
  int guard = 20;
  bool keep_all_scores = false;
  int jobs = 1;
};

// Exhaustive search over non-empty subsets maximizing mean sensitivity of
// the averaged validation predictions. Ties: smaller subset, then
// lexicographically smaller index list. Throws PoolTooLarge beyond guard.
SearchResult search_optimal_subset(const ConfigurationSet& cfgs, const std::unordered_map<std::string, int>& labels,
                                   const SearchOptions& options = {});

// Directory holding val_fold<j>.csv and optionally test_fold<j>.csv.
Configuration load_configuration(const std::filesystem::path& dir);

}  // namespace dermpipe
