#include "dermpipe/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dermpipe/errors.hpp"

namespace dermpipe {
namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

BinaryMask binarize_fov(const RgbImage& img, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw PipelineError(ErrorKind::InvalidArgument, "binarization threshold must lie in (0,1)");
  }
  BinaryMask mask(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      mask.set(y, x, img.gray(y, x) > threshold);
    }
  }
  return mask;
}

EllipseFit fit_fov_ellipse(const BinaryMask& mask) {
  double n = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      n += 1.0;
      sx += x;
      sy += y;
    }
  }
  if (n < 3.0) throw PipelineError(ErrorKind::DegenerateMask, "fewer than 3 foreground pixels");

  const double cx = sx / n;
  const double cy = sy / n;
  double mxx = 0.0;
  double myy = 0.0;
  double mxy = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      const double dx = x - cx;
      const double dy = y - cy;
      mxx += dx * dx;
      myy += dy * dy;
      mxy += dx * dy;
    }
  }
  mxx /= n;
  myy /= n;
  mxy /= n;

  // Collinear support has a singular point-sample covariance.
  const double det = mxx * myy - mxy * mxy;
  if (det <= 1e-12 * std::max(1.0, (mxx + myy) * (mxx + myy))) {
    throw PipelineError(ErrorKind::DegenerateMask, "foreground pixels are collinear");
  }

  mxx += 1.0 / 12.0;
  myy += 1.0 / 12.0;
  const double half_trace = 0.5 * (mxx + myy);
  const double disc = std::sqrt(0.25 * (mxx - myy) * (mxx - myy) + mxy * mxy);
  const double lambda_major = half_trace + disc;
  const double lambda_minor = std::max(half_trace - disc, 0.0);

  EllipseFit fit;
  fit.centroid_x = cx;
  fit.centroid_y = cy;
  fit.semi_major = 2.0 * std::sqrt(lambda_major);
  fit.semi_minor = 2.0 * std::sqrt(lambda_minor);
  double angle = 0.5 * std::atan2(2.0 * mxy, mxx - myy);
  if (angle <= -std::numbers::pi / 2) angle += std::numbers::pi;
  fit.orientation = angle;
  return fit;
}

CropBox derive_crop_box(const EllipseFit& fit, ImageDims dims, double inset) {
  if (!(inset > 0.0 && inset <= 1.0)) {
    throw PipelineError(ErrorKind::InvalidArgument, "inset must lie in (0,1]");
  }
  const double c = std::cos(fit.orientation);
  const double s = std::sin(fit.orientation);
  const double a = fit.semi_major;
  const double b = fit.semi_minor;
  const double half_x = inset * std::sqrt(a * a * c * c + b * b * s * s);
  const double half_y = inset * std::sqrt(a * a * s * s + b * b * c * c);

  CropBox box;
  box.x0 = std::clamp(round_half_up(fit.centroid_x - half_x), 0, dims.width);
  box.x1 = std::clamp(round_half_up(fit.centroid_x + half_x), 0, dims.width);
  box.y0 = std::clamp(round_half_up(fit.centroid_y - half_y), 0, dims.height);
  box.y1 = std::clamp(round_half_up(fit.centroid_y + half_y), 0, dims.height);
  if (box.x1 <= box.x0) {
    box.x0 = std::min(box.x0, dims.width - 1);
    box.x1 = box.x0 + 1;
  }
  if (box.y1 <= box.y0) {
    box.y0 = std::min(box.y0, dims.height - 1);
    box.y1 = box.y0 + 1;
  }
  return box;
}

bool should_crop(const RgbImage& img, const CropBox& box, double ratio_threshold, double outside_floor) {
  const bool covers_all = box.x0 <= 0 && box.y0 <= 0 && box.x1 >= img.width() && box.y1 >= img.height();
  if (covers_all) return false;

  double inside = 0.0;
  double outside = 0.0;
  std::size_t n_inside = 0;
  std::size_t n_outside = 0;
  for (int y = 0; y < img.height(); ++y) {
    const bool row_in = y >= box.y0 && y < box.y1;
    for (int x = 0; x < img.width(); ++x) {
      if (row_in && x >= box.x0 && x < box.x1) {
        inside += img.gray(y, x);
        ++n_inside;
      } else {
        outside += img.gray(y, x);
        ++n_outside;
      }
    }
  }
  if (n_inside == 0 || n_outside == 0) return false;
  const double mean_in = inside / static_cast<double>(n_inside);
  const double mean_out = std::max(outside / static_cast<double>(n_outside), outside_floor);
  return mean_in >= ratio_threshold * mean_out;
}

RgbImage crop(const RgbImage& img, const CropBox& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img.width() || box.y1 > img.height() || box.x1 <= box.x0 ||
      box.y1 <= box.y0) {
    throw PipelineError(ErrorKind::InvalidArgument, "crop box outside image bounds");
  }
  RgbImage out(box.height(), box.width());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y + box.y0, x + box.x0, c);
    }
  }
  return out;
}

std::array<double, 3> estimate_illuminant(const RgbImage& img, double p) {
  if (!(p >= 1.0)) throw PipelineError(ErrorKind::InvalidArgument, "Minkowski order must be >= 1");
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  const auto& data = img.data();
  const int whole = static_cast<int>(p);
  if (whole == p && whole <= 16) {
    for (std::size_t i = 0; i < data.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        double v = 1.0;
        for (int k = 0; k < whole; ++k) v *= data[i + c];
        acc[c] += v;
      }
    }
  } else {
    for (std::size_t i = 0; i < data.size(); i += 3) {
      for (int c = 0; c < 3; ++c) acc[c] += std::pow(data[i + c], p);
    }
  }
  const double n = static_cast<double>(img.pixel_count());
  for (auto& e : acc) e = std::pow(e / n, 1.0 / p);
  return acc;
}

std::array<double, 3> shades_of_gray_gains(const RgbImage& img, double p) {
  const auto e = estimate_illuminant(img, p);
  for (int c = 0; c < 3; ++c) {
    if (e[c] <= 0.0) {
      throw PipelineError(ErrorKind::ZeroChannel, "channel " + std::to_string(c) + " has zero illuminant estimate");
    }
  }
  const double mean_e = (e[0] + e[1] + e[2]) / 3.0;
  return {mean_e / e[0], mean_e / e[1], mean_e / e[2]};
}

RgbImage apply_channel_gains(const RgbImage& img, const std::array<double, 3>& gains) {
  std::vector<double> out(img.data().size());
  const auto& in = img.data();
  for (std::size_t i = 0; i < in.size(); i += 3) {
    for (int c = 0; c < 3; ++c) out[i + c] = std::clamp(in[i + c] * gains[c], 0.0, 1.0);
  }
  return RgbImage(img.height(), img.width(), std::move(out));
}

RgbImage shades_of_gray(const RgbImage& img, double p) {
  return apply_channel_gains(img, shades_of_gray_gains(img, p));
}

ImageDims resized_dims(ImageDims dims, int target) {
  if (target < 1) throw PipelineError(ErrorKind::InvalidArgument, "resize target must be >= 1");
  const int longest = std::max(dims.width, dims.height);
  if (longest <= target) return dims;
  const auto scale_short = [&](int side) {
    return std::max(1, round_half_up(static_cast<double>(side) * target / longest));
  };
  if (dims.width >= dims.height) return {target, scale_short(dims.height)};
  return {scale_short(dims.width), target};
}

RgbImage resize_bilinear(const RgbImage& img, ImageDims out_dims) {
  RgbImage out(out_dims.height, out_dims.width);
  const double sx = static_cast<double>(img.width()) / out_dims.width;
  const double sy = static_cast<double>(img.height()) / out_dims.height;
  for (int y = 0; y < out_dims.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_dims.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bottom = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0);
      }
    }
  }
  return out;
}

RgbImage resize_longest(const RgbImage& img, int target) {
  const ImageDims in{img.width(), img.height()};
  const ImageDims out = resized_dims(in, target);
  if (out == in) return img;
  return resize_bilinear(img, out);
}

PreprocessResult preprocess_image(const RgbImage& img, const PreprocessConfig& cfg) {
  CropReport report;
  report.box = CropBox{0, 0, img.width(), img.height()};

  const RgbImage* source = &img;
  std::optional<RgbImage> cropped;
  try {
    const EllipseFit fit = fit_fov_ellipse(binarize_fov(img, cfg.threshold));
    const CropBox box = derive_crop_box(fit, {img.width(), img.height()}, cfg.inset);
    report.box = box;
    if (should_crop(img, box, cfg.ratio_threshold, cfg.outside_floor)) {
      cropped = crop(img, box);
      source = &*cropped;
      report.cropped = true;
    }
  } catch (const PipelineError& e) {
    if (e.kind() != ErrorKind::DegenerateMask) throw;
    report.warn_degenerate = true;
  }

  RgbImage balanced = *source;
  try {
    balanced = shades_of_gray(*source, cfg.minkowski_p);
  } catch (const PipelineError& e) {
    if (e.kind() != ErrorKind::ZeroChannel) throw;
    report.color_skipped = true;
  }
  return {resize_longest(balanced, cfg.target), report};
}

}  // namespace dermpipe
