#include "dermpipe/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dermpipe/csv.hpp"
#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"
#include "dermpipe/rng.hpp"

namespace dermpipe {

std::optional<int> parse_class(std::string_view name) {
  std::string upper;
  for (char ch : name) {
    if (ch == ' ' || ch == '\t' || ch == '\r') continue;
    upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  }
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == upper) return i;
  }
  return std::nullopt;
}

void Manifest::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& row : rows) {
    if (row.image.empty()) throw PipelineError(ErrorKind::InvalidArgument, "manifest row with empty image id");
    if (!seen.insert(row.image).second) {
      throw PipelineError(ErrorKind::InvalidArgument, "duplicate image id '" + row.image + "'");
    }
    if (row.label < 0 || row.label >= kNumClasses) {
      throw PipelineError(ErrorKind::UnknownLabel, "image '" + row.image + "' has an invalid label");
    }
    if (row.label == kUnknownClass && row.source != Source::External) {
      throw PipelineError(ErrorKind::InvalidArgument, "UNK image '" + row.image + "' must come from an external source");
    }
  }
}

Manifest parse_manifest(std::string_view text, std::string_view source_name) {
  const CsvTable table = parse_csv(text, source_name);
  const std::size_t c_image = table.require_column("image", source_name);
  const std::size_t c_age = table.require_column("age_approx", source_name);
  const std::size_t c_site = table.require_column("anatom_site_general", source_name);
  const std::size_t c_sex = table.require_column("sex", source_name);
  const std::size_t c_lesion = table.require_column("lesion_id", source_name);
  const std::size_t c_label = table.require_column("label", source_name);
  const auto c_source = table.column("source");

  Manifest manifest;
  manifest.rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const std::string where = std::string(source_name) + ":" + std::to_string(table.lines[r]);
    ManifestRow row;
    row.image = f[c_image];
    row.lesion_id = f[c_lesion];
    const auto label = parse_class(f[c_label]);
    if (!label) throw PipelineError(ErrorKind::UnknownLabel, where + ": unknown label '" + f[c_label] + "'");
    row.label = *label;
    if (c_source) {
      const std::string& src = f[*c_source];
      if (src.empty() || src == "main") {
        row.source = Source::Main;
      } else if (src == "external") {
        row.source = Source::External;
      } else {
        throw PipelineError(ErrorKind::InvalidArgument, where + ": unknown source '" + src + "'");
      }
    }
    try {
      row.meta.age = parse_age(f[c_age]);
    } catch (const PipelineError&) {
      throw PipelineError(ErrorKind::InvalidArgument, where + ": invalid age '" + f[c_age] + "'");
    }
    bool unknown = false;
    row.meta.site = parse_site(f[c_site], &unknown);
    if (unknown) manifest.warnings.push_back(where + ": unknown anatomical site '" + f[c_site] + "' treated as missing");
    row.meta.sex = parse_sex(f[c_sex], &unknown);
    if (unknown) manifest.warnings.push_back(where + ": unknown sex '" + f[c_sex] + "' treated as missing");
    manifest.rows.push_back(std::move(row));
  }
  manifest.validate();
  return manifest;
}

Manifest read_manifest(const std::string& path) { return parse_manifest(read_file(path), path); }

std::string format_manifest(const Manifest& manifest) {
  std::string out = "image,age_approx,anatom_site_general,sex,lesion_id,label,source\n";
  for (const auto& row : manifest.rows) {
    append_csv_row(out, {row.image, age_text(row.meta.age), site_name(row.meta.site), sex_name(row.meta.sex),
                         row.lesion_id, std::string(kClassNames[row.label]),
                         row.source == Source::Main ? "main" : "external"});
  }
  return out;
}

std::optional<int> FoldAssignment::fold_of(std::string_view image) const {
  for (const auto& [id, fold] : entries) {
    if (id == image) return fold;
  }
  return std::nullopt;
}

FoldSplit split_folds(const Manifest& manifest, int folds, std::uint64_t seed) {
  if (folds < 2) throw PipelineError(ErrorKind::InvalidArgument, "need at least 2 folds");

  // Group keys are namespaced so an image id can never collide with a lesion id.
  struct Group {
    std::array<int, kNumClasses> votes{};
    int fold = -1;
  };
  std::map<std::string, Group> groups;
  std::vector<std::string> row_group(manifest.rows.size());
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    if (row.source != Source::Main) continue;
    row_group[i] = row.lesion_id.empty() ? "i:" + row.image : "l:" + row.lesion_id;
    groups[row_group[i]].votes[row.label] += 1;
  }

  // Lesion class is the majority label; ties go to the lowest class index.
  std::array<std::vector<std::string>, kNumClasses> by_class;
  for (const auto& [key, group] : groups) {
    const auto best = std::max_element(group.votes.begin(), group.votes.end());
    by_class[static_cast<std::size_t>(best - group.votes.begin())].push_back(key);
  }

  FoldSplit split;
  Rng rng(seed);
  std::vector<std::string> leftovers;
  int next_fold = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& keys = by_class[c];  // already sorted (std::map order)
    rng.shuffle(std::span<std::string>(keys));
    if (keys.empty()) continue;
    if (keys.size() < static_cast<std::size_t>(folds)) {
      split.warnings.push_back(std::string(to_string(ErrorKind::TooFewLesions)) + ": class " +
                               std::string(kClassNames[c]) + " has " + std::to_string(keys.size()) +
                               " lesion groups for " + std::to_string(folds) + " folds; assigned unstratified");
      leftovers.insert(leftovers.end(), keys.begin(), keys.end());
      continue;
    }
    for (const auto& key : keys) {
      groups[key].fold = next_fold;
      next_fold = (next_fold + 1) % folds;
    }
  }
  rng.shuffle(std::span<std::string>(leftovers));
  for (const auto& key : leftovers) {
    groups[key].fold = next_fold;
    next_fold = (next_fold + 1) % folds;
  }

  split.assignment.folds = folds;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    if (manifest.rows[i].source != Source::Main) continue;
    split.assignment.entries.emplace_back(manifest.rows[i].image, groups[row_group[i]].fold);
  }
  return split;
}

std::string format_fold_file(const FoldAssignment& assignment) {
  std::string out = "image,fold\n";
  for (const auto& [image, fold] : assignment.entries) append_csv_row(out, {image, std::to_string(fold)});
  return out;
}

FoldAssignment parse_fold_file(std::string_view text, std::string_view source_name) {
  const CsvTable table = parse_csv(text, source_name);
  const std::size_t c_image = table.require_column("image", source_name);
  const std::size_t c_fold = table.require_column("fold", source_name);
  FoldAssignment assignment;
  int max_fold = -1;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    int fold = -1;
    try {
      fold = std::stoi(table.rows[r][c_fold]);
    } catch (const std::exception&) {
    }
    if (fold < 0) {
      throw PipelineError(ErrorKind::InvalidArgument, std::string(source_name) + ":" +
                                                          std::to_string(table.lines[r]) + ": invalid fold");
    }
    max_fold = std::max(max_fold, fold);
    assignment.entries.emplace_back(table.rows[r][c_image], fold);
  }
  assignment.folds = max_fold + 1;
  return assignment;
}

TrainValRows assemble_training_set(const FoldAssignment& assignment, const Manifest& manifest, int val_fold) {
  if (val_fold < 0 || val_fold >= assignment.folds) {
    throw PipelineError(ErrorKind::InvalidArgument, "validation fold " + std::to_string(val_fold) + " out of range");
  }
  std::unordered_map<std::string, int> fold_by_image;
  for (const auto& [image, fold] : assignment.entries) fold_by_image.emplace(image, fold);

  TrainValRows out;
  for (const auto& row : manifest.rows) {
    if (row.source == Source::External) {
      out.train.push_back(row);
      continue;
    }
    const auto it = fold_by_image.find(row.image);
    if (it == fold_by_image.end()) {
      throw PipelineError(ErrorKind::InvalidArgument, "image '" + row.image + "' has no fold assignment");
    }
    if (it->second != val_fold) {
      out.train.push_back(row);
    } else if (row.label != kUnknownClass) {
      out.val.push_back(row);
    }
  }
  return out;
}

ClassCounts class_counts(std::span<const ManifestRow> rows) {
  ClassCounts counts{};
  for (const auto& row : rows) counts.at(static_cast<std::size_t>(row.label)) += 1;
  return counts;
}

std::vector<double> class_weights(std::span<const std::int64_t> counts, double k) {
  if (!(k >= 0.0) || !std::isfinite(k)) throw PipelineError(ErrorKind::InvalidArgument, "balancing exponent k must be >= 0");
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] <= 0) throw PipelineError(ErrorKind::EmptyClass, "class " + std::to_string(i) + " has no examples");
    total += static_cast<double>(counts[i]);
  }
  std::vector<double> weights(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    weights[i] = std::pow(total / static_cast<double>(counts[i]), k);
  }
  return weights;
}

TrainingWeights training_class_weights(std::span<const ManifestRow> rows, double k) {
  const ClassCounts counts = class_counts(rows);
  std::vector<std::int64_t> present_counts;
  TrainingWeights out;
  out.weights.fill(1.0);
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[c] > 0) {
      out.present[c] = true;
      present_counts.push_back(counts[c]);
    }
  }
  if (present_counts.empty()) throw PipelineError(ErrorKind::EmptyClass, "training set is empty");
  const auto w = class_weights(present_counts, k);
  std::size_t j = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (out.present[c]) out.weights[c] = w[j++];
  }
  return out;
}

std::string format_weights_file(const TrainingWeights& weights) {
  std::string out = "class,weight\n";
  for (int c = 0; c < kNumClasses; ++c) {
    if (weights.present[c]) append_csv_row(out, {std::string(kClassNames[c]), format_double(weights.weights[c])});
  }
  return out;
}

TrainingWeights parse_weights_file(std::string_view text, std::string_view source_name) {
  const CsvTable table = parse_csv(text, source_name);
  const std::size_t c_class = table.require_column("class", source_name);
  const std::size_t c_weight = table.require_column("weight", source_name);
  TrainingWeights out;
  out.weights.fill(1.0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = std::string(source_name) + ":" + std::to_string(table.lines[r]);
    const auto cls = parse_class(table.rows[r][c_class]);
    if (!cls) throw PipelineError(ErrorKind::UnknownLabel, where + ": unknown class");
    double w = 0.0;
    try {
      w = std::stod(table.rows[r][c_weight]);
    } catch (const std::exception&) {
      w = -1.0;
    }
    if (!(w > 0.0) || !std::isfinite(w)) throw PipelineError(ErrorKind::InvalidArgument, where + ": weight must be positive");
    out.weights[*cls] = w;
    out.present[*cls] = true;
  }
  return out;
}

}  // namespace dermpipe
