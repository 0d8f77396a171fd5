#include "dermpipe/tta.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dermpipe/errors.hpp"

namespace dermpipe {

std::string_view flip_name(Flip flip) {
  switch (flip) {
    case Flip::None: return "none";
    case Flip::Horizontal: return "h";
    case Flip::Vertical: return "v";
    case Flip::Both: return "hv";
  }
  return "none";
}

std::string_view mode_name(CropMode mode) { return mode == CropMode::SameSize ? "same-size" : "resize"; }

std::vector<CropSpec> crop_schedule_ss(ImageDims dims, int crop) {
  if (crop < 1) throw PipelineError(ErrorKind::InvalidArgument, "crop size must be >= 1");
  if (crop > dims.width || crop > dims.height) {
    throw PipelineError(ErrorKind::CropTooLarge, "crop " + std::to_string(crop) + " exceeds image " +
                                                     std::to_string(dims.width) + "x" + std::to_string(dims.height));
  }
  const auto offsets = [crop](int dim) {
    std::array<int, kSsGrid> out{};
    const int travel = dim - crop;
    for (int i = 0; i < kSsGrid; ++i) {
      // round(i·travel/5) with exact integer arithmetic, halves rounding up.
      out[i] = (2 * i * travel + (kSsGrid - 1)) / (2 * (kSsGrid - 1));
    }
    return out;
  };
  const auto xs = offsets(dims.width);
  const auto ys = offsets(dims.height);
  std::vector<CropSpec> specs;
  specs.reserve(kSsGrid * kSsGrid);
  for (int y : ys) {
    for (int x : xs) specs.push_back({CropMode::SameSize, {x, y, x + crop, y + crop}, 1.0, Flip::None});
  }
  return specs;
}

std::vector<CropSpec> crop_schedule_rr(ImageDims dims, std::span<const double> scales) {
  if (dims.width < 1 || dims.height < 1) throw PipelineError(ErrorKind::InvalidArgument, "empty image");
  const int shorter = std::min(dims.width, dims.height);
  std::vector<CropSpec> specs;
  specs.reserve(scales.size() * kAllFlips.size());
  for (double scale : scales) {
    if (!(scale > 0.0 && scale <= 1.0)) throw PipelineError(ErrorKind::InvalidArgument, "crop scale must lie in (0,1]");
    const int side = std::max(1, static_cast<int>(std::floor(shorter * scale)));
    const int x0 = (dims.width - side) / 2;
    const int y0 = (dims.height - side) / 2;
    for (Flip flip : kAllFlips) specs.push_back({CropMode::Resize, {x0, y0, x0 + side, y0 + side}, scale, flip});
  }
  return specs;
}

RgbImage render_view(const RgbImage& img, const CropSpec& spec, int output) {
  RgbImage view = crop(img, spec.rect);
  if (spec.mode == CropMode::Resize && (view.width() != output || view.height() != output)) {
    view = resize_bilinear(view, {output, output});
  }
  if (spec.flip == Flip::None) return view;
  const bool fh = spec.flip == Flip::Horizontal || spec.flip == Flip::Both;
  const bool fv = spec.flip == Flip::Vertical || spec.flip == Flip::Both;
  RgbImage out(view.height(), view.width());
  for (int y = 0; y < view.height(); ++y) {
    for (int x = 0; x < view.width(); ++x) {
      const int sy = fv ? view.height() - 1 - y : y;
      const int sx = fh ? view.width() - 1 - x : x;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = view.at(sy, sx, c);
    }
  }
  return out;
}

ProbRow aggregate_predictions(std::span<const ProbRow> views) {
  if (views.empty()) throw PipelineError(ErrorKind::InvalidArgument, "no views to aggregate");
  ProbRow out{};
  for (const auto& v : views) {
    for (int c = 0; c < kNumClasses; ++c) out[c] += v[c];
  }
  for (auto& p : out) p /= static_cast<double>(views.size());
  return out;
}

}  // namespace dermpipe
