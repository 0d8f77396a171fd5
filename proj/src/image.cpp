#include "dermpipe/image.hpp"

#include <algorithm>
#include <string>

#include "dermpipe/errors.hpp"

namespace dermpipe {
namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw PipelineError(ErrorKind::InvalidArgument,
                        "image dimensions must be positive, got " + std::to_string(height) + "x" +
                            std::to_string(width));
  }
}

}  // namespace

RgbImage::RgbImage(int height, int width, double fill) : height_(height), width_(width) {
  check_dims(height, width);
  if (!(fill >= 0.0 && fill <= 1.0)) throw PipelineError(ErrorKind::InvalidArgument, "fill outside [0,1]");
  data_.assign(pixel_count() * 3, fill);
}

RgbImage::RgbImage(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != pixel_count() * 3) {
    throw PipelineError(ErrorKind::ShapeMismatch, "image buffer has " + std::to_string(data_.size()) +
                                                      " values, expected " + std::to_string(pixel_count() * 3));
  }
  if (!std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; })) {
    throw PipelineError(ErrorKind::InvalidArgument, "image values must lie in [0,1]");
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

}  // namespace dermpipe
