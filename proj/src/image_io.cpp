#include "dermpipe/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"

namespace dermpipe {

RgbImage load_image(const std::filesystem::path& path) {
  const cv::Mat mat = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  if (mat.empty()) throw PipelineError(ErrorKind::Io, "cannot decode image " + path.string());

  double scale = 1.0 / 255.0;
  if (mat.depth() == CV_16U) {
    scale = 1.0 / 65535.0;
  } else if (mat.depth() != CV_8U) {
    throw PipelineError(ErrorKind::Io, "unsupported bit depth in " + path.string());
  }

  std::vector<double> data(static_cast<std::size_t>(mat.rows) * mat.cols * 3);
  std::size_t i = 0;
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      // OpenCV stores BGR.
      for (int c = 2; c >= 0; --c) {
        const double v = mat.depth() == CV_8U ? mat.at<cv::Vec3b>(y, x)[c] : mat.at<cv::Vec3w>(y, x)[c];
        data[i++] = v * scale;
      }
    }
  }
  return RgbImage(mat.rows, mat.cols, std::move(data));
}

ImageDims probe_image_dims(const std::filesystem::path& path) {
  // IMREAD_REDUCED would change the size; a full decode is the portable route.
  const cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw PipelineError(ErrorKind::Io, "cannot decode image " + path.string());
  return {mat.cols, mat.rows};
}

void save_png(const RgbImage& img, const std::filesystem::path& path) {
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        px[2 - c] = static_cast<unsigned char>(std::lround(img.at(y, x, c) * 255.0));
      }
    }
  }
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", mat, buf, {cv::IMWRITE_PNG_COMPRESSION, 1})) {
    throw PipelineError(ErrorKind::Io, "PNG encoding failed for " + path.string());
  }
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()));
}

}  // namespace dermpipe
