#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dermpipe {

// Row-major H×W×3 raster with channel values in [0, 1].
class RgbImage {
 public:
  RgbImage(int height, int width, double fill = 0.0);
  // Validates dimensions and the [0, 1] range.
  RgbImage(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  // Unweighted channel mean.
  double gray(int y, int x) const {
    const std::size_t i = index(y, x, 0);
    return (data_[i] + data_[i + 1] + data_[i + 2]) / 3.0;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_;
  int width_;
  std::vector<double> data_;
};

class BinaryMask {
 public:
  BinaryMask(int height, int width) : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::size_t count() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
};

struct ImageDims {
  int width = 0;
  int height = 0;
  bool operator==(const ImageDims&) const = default;
};

}  // namespace dermpipe
