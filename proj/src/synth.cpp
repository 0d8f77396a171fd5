#include "dermpipe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"
#include "dermpipe/image_io.hpp"
#include "dermpipe/rng.hpp"

namespace dermpipe {
namespace {

std::string image_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "SYN_%06d", i);
  return buf;
}

std::string lesion_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "LES_%05d", i);
  return buf;
}

MetaRecord random_meta(Rng& rng, double missing_rate) {
  MetaRecord m;
  const double age = 5.0 * static_cast<double>(rng.below(18));
  const int site = static_cast<int>(rng.below(kSiteCount));
  const Sex sex = rng.below(2) == 0 ? Sex::Male : Sex::Female;
  if (!rng.bernoulli(missing_rate)) m.age = age;
  if (!rng.bernoulli(missing_rate)) m.site = site;
  if (!rng.bernoulli(missing_rate)) m.sex = sex;
  return m;
}

// Skin-toned field with a darker elliptical lesion; optionally only inside a
// circular field of view on black, mimicking uncropped dermoscopy.
RgbImage render_lesion(Rng& rng, int label, int size, bool uncropped) {
  const bool landscape = rng.bernoulli(0.5);
  const int width = size;
  const int height = landscape ? size * 3 / 4 : size;
  const std::array<double, 3> cast = {0.75 + 0.25 * rng.uniform(), 0.6 + 0.3 * rng.uniform(), 0.5 + 0.3 * rng.uniform()};
  const std::array<double, 3> skin = {0.85, 0.65, 0.55};
  const double hue = static_cast<double>(label) / kNumClasses;
  const std::array<double, 3> lesion = {0.35 + 0.3 * hue, 0.2 + 0.15 * (1.0 - hue), 0.15 + 0.1 * hue};
  const double cx = width / 2.0 + (rng.uniform() - 0.5) * width * 0.05;
  const double cy = height / 2.0 + (rng.uniform() - 0.5) * height * 0.05;
  const double fov = 0.47 * std::min(width, height);
  const double la = fov * (0.3 + 0.2 * rng.uniform());
  const double lb = la * (0.6 + 0.4 * rng.uniform());

  RgbImage img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      if (uncropped && dx * dx + dy * dy > fov * fov) continue;
      const double r = (dx * dx) / (la * la) + (dy * dy) / (lb * lb);
      const double t = std::clamp(1.5 - r, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double base = skin[c] * (1.0 - t) + lesion[c] * t;
        const double noise = 0.02 * (rng.uniform() - 0.5);
        img.at(y, x, c) = std::clamp(base * cast[c] + noise, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

SynthCorpus generate_synthetic(std::uint64_t seed, const SynthOptions& o) {
  if (o.images < 1 || o.classes < 1 || o.classes > kNumClasses || o.features < 1 || o.replicates < 1 ||
      o.test_images < 0 || o.image_size < 16 || o.ss_views < 1 || o.rr_views < 1) {
    throw PipelineError(ErrorKind::InvalidArgument, "synthetic corpus sizes must be positive");
  }
  Rng root(seed);
  Rng label_rng = root.split(1);
  Rng meta_rng = root.split(2);
  Rng feature_rng = root.split(3);
  Rng image_rng = root.split(4);

  // Class means: a scaled axis direction per class plus a shared offset.
  std::vector<std::vector<double>> means(static_cast<std::size_t>(o.classes), std::vector<double>(o.features, 1.0));
  for (int c = 0; c < o.classes; ++c) {
    means[c][static_cast<std::size_t>(c % o.features)] += o.separation;
    if (o.features > o.classes) means[c][static_cast<std::size_t>((c + o.classes) % o.features)] -= 0.5 * o.separation;
  }
  // Mildly imbalanced label distribution, decreasing with class index.
  std::vector<double> prior(static_cast<std::size_t>(o.classes));
  double prior_sum = 0.0;
  for (int c = 0; c < o.classes; ++c) prior_sum += prior[c] = 1.0 + 0.25 * (o.classes - 1 - c);
  const auto draw_label = [&] {
    double u = label_rng.uniform() * prior_sum;
    for (int c = 0; c < o.classes; ++c) {
      if ((u -= prior[c]) < 0.0) return c;
    }
    return o.classes - 1;
  };

  SynthCorpus corpus{{}, {}, {}, FeatureStore(o.features, o.replicates), FeatureStore(o.features, o.ss_views),
                     FeatureStore(o.features, o.rr_views)};

  int image_counter = 0;
  int lesion_counter = 0;
  const auto emit_rows = [&](Manifest& manifest, int count, bool allow_unk) {
    int made = 0;
    while (made < count) {
      int label = draw_label();
      if (!allow_unk && label == kUnknownClass) label = 0;
      const bool unk = label == kUnknownClass;
      const bool paired = !unk && made + 1 < count && label_rng.bernoulli(o.paired_lesion_rate);
      const std::string lesion = unk ? std::string() : lesion_name(lesion_counter++);
      const MetaRecord meta = unk ? MetaRecord{} : random_meta(meta_rng, o.missing_rate);
      for (int k = 0; k < (paired ? 2 : 1); ++k) {
        ManifestRow row;
        row.image = image_name(image_counter++);
        row.lesion_id = lesion;
        row.label = label;
        row.source = unk ? Source::External : Source::Main;
        row.meta = meta;
        manifest.rows.push_back(std::move(row));
        ++made;
      }
    }
  };
  emit_rows(corpus.train, o.images, true);
  emit_rows(corpus.test, o.test_images, false);

  const auto sample = [&](const std::vector<double>& offset, int views) {
    std::vector<float> out(static_cast<std::size_t>(views) * o.features);
    for (int v = 0; v < views; ++v) {
      for (int i = 0; i < o.features; ++i) {
        out[static_cast<std::size_t>(v) * o.features + i] =
            static_cast<float>(offset[static_cast<std::size_t>(i)] + o.view_noise * feature_rng.normal());
      }
    }
    return out;
  };
  const auto add_features = [&](const ManifestRow& row, bool training) {
    std::vector<double> center = means[static_cast<std::size_t>(row.label)];
    for (auto& v : center) v += o.image_noise * feature_rng.normal();
    if (training) corpus.train_features.add(row.image, sample(center, o.replicates));
    corpus.ss_features.add(row.image, sample(center, o.ss_views));
    corpus.rr_features.add(row.image, sample(center, o.rr_views));
  };
  for (const auto& row : corpus.train.rows) add_features(row, true);
  for (const auto& row : corpus.test.rows) add_features(row, false);

  if (o.render_images) {
    for (const Manifest* m : {&corpus.train, &corpus.test}) {
      for (const auto& row : m->rows) {
        const bool uncropped = image_rng.bernoulli(o.uncropped_rate);
        corpus.images.emplace_back(row.image, render_lesion(image_rng, row.label, o.image_size, uncropped));
      }
    }
  }
  return corpus;
}

void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (!corpus.images.empty()) std::filesystem::create_directories(dir / "images");
  for (const auto& [id, img] : corpus.images) save_png(img, dir / "images" / (id + ".png"));
  write_file_atomic(dir / "manifest.csv", format_manifest(corpus.train));
  write_file_atomic(dir / "test.csv", format_manifest(corpus.test));
  save_feature_store(corpus.train_features, (dir / "features_train.dfv").string());
  save_feature_store(corpus.ss_features, (dir / "features_ss.dfv").string());
  save_feature_store(corpus.rr_features, (dir / "features_rr.dfv").string());
}

}  // namespace dermpipe
