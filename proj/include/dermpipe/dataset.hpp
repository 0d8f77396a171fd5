#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dermpipe/metadata.hpp"

namespace dermpipe {

inline constexpr int kNumClasses = 9;
inline constexpr int kKnownClasses = 8;
inline constexpr int kUnknownClass = 8;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC", "UNK"};

std::optional<int> parse_class(std::string_view name);

enum class Source { Main, External };

struct ManifestRow {
  std::string image;
  std::string lesion_id;  // empty: the image is its own lesion group
  int label = 0;
  Source source = Source::Main;
  MetaRecord meta;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  // Non-fatal issues met while parsing (unknown vocabulary etc.).
  std::vector<std::string> warnings;

  // Unique image ids; UNK only from external sources.
  void validate() const;
};

// Header: image,age_approx,anatom_site_general,sex,lesion_id,label with an
// optional trailing `source` column (main|external, default main).
Manifest parse_manifest(std::string_view text, std::string_view source_name = "<manifest>");
Manifest read_manifest(const std::string& path);
std::string format_manifest(const Manifest& manifest);

struct FoldAssignment {
  int folds = 0;
  // Main-source images in manifest order.
  std::vector<std::pair<std::string, int>> entries;

  std::optional<int> fold_of(std::string_view image) const;
};

struct FoldSplit {
  FoldAssignment assignment;
  // One message per class that had fewer lesion groups than folds.
  std::vector<std::string> warnings;
};

// Lesion-grouped, class-stratified split of the main rows.
FoldSplit split_folds(const Manifest& manifest, int folds, std::uint64_t seed);

std::string format_fold_file(const FoldAssignment& assignment);
FoldAssignment parse_fold_file(std::string_view text, std::string_view source_name = "<folds>");

struct TrainValRows {
  std::vector<ManifestRow> train;
  std::vector<ManifestRow> val;
};

// Train: main rows outside val_fold plus every external row. Val: main rows
// of val_fold that carry a known (non-UNK) label.
TrainValRows assemble_training_set(const FoldAssignment& assignment, const Manifest& manifest, int val_fold);

using ClassCounts = std::array<std::int64_t, kNumClasses>;
ClassCounts class_counts(std::span<const ManifestRow> rows);

// weight_i = (N / N_i)^k with N the total count. Throws EmptyClass on a zero
// count.
std::vector<double> class_weights(std::span<const std::int64_t> counts, double k);

using ClassWeights = std::array<double, kNumClasses>;

struct TrainingWeights {
  ClassWeights weights{};
  std::array<bool, kNumClasses> present{};
};

// Weights over the classes present in the rows; absent classes get 1.
TrainingWeights training_class_weights(std::span<const ManifestRow> rows, double k);

std::string format_weights_file(const TrainingWeights& weights);
TrainingWeights parse_weights_file(std::string_view text, std::string_view source_name = "<weights>");

}  // namespace dermpipe
