#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dermpipe/dataset.hpp"
#include "dermpipe/fusion_head.hpp"
#include "dermpipe/image.hpp"

namespace dermpipe {

struct SynthOptions {
  int images = 200;  // training images, main + external
  int classes = kNumClasses;
  int test_images = 0;
  int features = 32;
  int replicates = 4;
  double separation = 6.0;  // distance scale between class cluster means
  double image_noise = 0.6;  // per-image feature offset std
  double view_noise = 0.4;   // per-replicate / per-view std
  double missing_rate = 0.3;
  double paired_lesion_rate = 0.3;  // chance a lesion contributes two images
  double uncropped_rate = 0.6;      // disc-on-black share of rendered images
  int image_size = 400;             // longer side of rendered images
  bool render_images = true;
  int ss_views = 36;
  int rr_views = 16;
};

struct SynthCorpus {
  Manifest train;  // main rows for classes < 8, external rows for UNK
  Manifest test;   // held-out main rows with known labels
  std::vector<std::pair<std::string, RgbImage>> images;
  FeatureStore train_features;  // options.replicates per training image
  FeatureStore ss_features;     // ss_views per image, training and test
  FeatureStore rr_features;     // rr_views per image, training and test
};

SynthCorpus generate_synthetic(std::uint64_t seed, const SynthOptions& options);

// images/<id>.png, manifest.csv, test.csv, features_train.dfv,
// features_ss.dfv, features_rr.dfv.
void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace dermpipe
