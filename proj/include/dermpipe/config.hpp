#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dermpipe/ensemble.hpp"
#include "dermpipe/fusion_head.hpp"
#include "dermpipe/imaging.hpp"
#include "dermpipe/tta.hpp"

namespace dermpipe {

struct FoldsConfig {
  int m = 5;
  std::uint64_t seed = 42;
};

struct HeadConfig {
  int features = 0;  // 0: take F from the feature file
  int hidden = 256;
  int fusion = 1024;
  TrainConfig train;
};

struct TtaConfig {
  CropMode mode = CropMode::SameSize;
  int crop = 224;   // same-size window
  int input = 224;  // resize output side
  std::vector<double> scales{kDefaultRrScales.begin(), kDefaultRrScales.end()};
};

struct EnsembleConfig {
  std::vector<std::string> pool;
  int guard = 20;
  SubsetScoring scoring = SubsetScoring::Pooled;
};

struct PipelineConfig {
  PreprocessConfig preprocess;
  FoldsConfig folds;
  double loss_k = 1.0;
  HeadConfig head;
  TtaConfig tta;
  EnsembleConfig ensemble;
  double auc_s_floor = 0.8;
};

// INI-style text: `[section]` headers, `key = value` lines, `#`/`;`
// comments. Unknown sections/keys and malformed values raise Config errors
// carrying `source:line`.
PipelineConfig parse_config(std::string_view text, std::string_view source_name = "<config>");
PipelineConfig load_config(const std::string& path);

// `section.key=value`, as given on the command line.
void apply_override(PipelineConfig& cfg, std::string_view assignment, std::string_view source_name = "<override>");

// Serialize every key with its current value.
std::string format_config(const PipelineConfig& cfg);

}  // namespace dermpipe
