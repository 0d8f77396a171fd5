#pragma once

#include <array>
#include <optional>

#include "dermpipe/image.hpp"

namespace dermpipe {

struct EllipseFit {
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  // Angle of the major axis against +x, in (-pi/2, pi/2].
  double orientation = 0.0;
};

// Half-open pixel bounds.
struct CropBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const CropBox&) const = default;
};

struct PreprocessConfig {
  double threshold = 0.04;
  double minkowski_p = 6.0;
  int target = 600;
  double inset = 1.0;
  double ratio_threshold = 2.0;
  double outside_floor = 1e-3;
};

struct CropReport {
  bool cropped = false;
  bool warn_degenerate = false;
  // Color constancy skipped because a channel was entirely zero.
  bool color_skipped = false;
  // Box that was (or would have been) applied; full frame when degenerate.
  CropBox box;
};

struct PreprocessResult {
  RgbImage image;
  CropReport report;
};

BinaryMask binarize_fov(const RgbImage& img, double threshold);

// Moment-equivalent ellipse of the set pixels. Pixels are treated as unit
// squares, so the second moments include the 1/12 per-pixel term.
// Throws DegenerateMask for fewer than 3 pixels or collinear support.
EllipseFit fit_fov_ellipse(const BinaryMask& mask);

CropBox derive_crop_box(const EllipseFit& fit, ImageDims dims, double inset);

bool should_crop(const RgbImage& img, const CropBox& box, double ratio_threshold,
                 double outside_floor = 1e-3);

RgbImage crop(const RgbImage& img, const CropBox& box);

// Per-channel Minkowski-p mean (mean of I^p)^(1/p).
std::array<double, 3> estimate_illuminant(const RgbImage& img, double p);
// mean(e)/e_c per channel; throws ZeroChannel if any estimate is zero.
std::array<double, 3> shades_of_gray_gains(const RgbImage& img, double p);
RgbImage apply_channel_gains(const RgbImage& img, const std::array<double, 3>& gains);
RgbImage shades_of_gray(const RgbImage& img, double p);

// Output dimensions of resize_longest without doing the work.
ImageDims resized_dims(ImageDims dims, int target);
RgbImage resize_bilinear(const RgbImage& img, ImageDims out);
RgbImage resize_longest(const RgbImage& img, int target = 600);

PreprocessResult preprocess_image(const RgbImage& img, const PreprocessConfig& cfg);

}  // namespace dermpipe
