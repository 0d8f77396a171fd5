#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "dermpipe/dataset.hpp"
#include "dermpipe/image.hpp"
#include "dermpipe/imaging.hpp"

namespace dermpipe {

enum class CropMode { SameSize, Resize };
enum class Flip { None, Horizontal, Vertical, Both };

inline constexpr std::array<Flip, 4> kAllFlips = {Flip::None, Flip::Horizontal, Flip::Vertical, Flip::Both};
inline constexpr std::array<double, 4> kDefaultRrScales = {1.0, 0.875, 0.75, 0.625};
inline constexpr int kSsGrid = 6;

struct CropSpec {
  CropMode mode = CropMode::SameSize;
  CropBox rect;
  double scale = 1.0;
  Flip flip = Flip::None;

  bool operator==(const CropSpec&) const = default;
};

std::string_view flip_name(Flip flip);
std::string_view mode_name(CropMode mode);

// 6×6 grid of crop×crop windows; corner offsets round(i·(dim-crop)/5).
// Throws CropTooLarge when crop exceeds either dimension.
std::vector<CropSpec> crop_schedule_ss(ImageDims dims, int crop);

// Center squares of side floor(shorter·scale) for each scale, each with the
// four flip states (scale-major order).
std::vector<CropSpec> crop_schedule_rr(ImageDims dims, std::span<const double> scales = kDefaultRrScales);

// Cut out the view, flip it, and for Resize views resample to output×output.
RgbImage render_view(const RgbImage& img, const CropSpec& spec, int output);

using ProbRow = std::array<double, kNumClasses>;

// Arithmetic mean in probability space.
ProbRow aggregate_predictions(std::span<const ProbRow> views);

}  // namespace dermpipe
