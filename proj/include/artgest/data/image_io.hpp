#pragma once

#include <cmath>
#include <filesystem>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "artgest/core/tensor.hpp"
#include "artgest/data/manifest.hpp"

namespace artgest::data {

/// Decodes to 3-channel BGR (OpenCV native order).
inline cv::Mat load_image(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  require(!img.empty(), ErrorCode::ImageDecodeError, "failed to decode " + path.string());
  return img;
}

/// Integer pixel rectangle of `bbox` expanded by pad_ratio * max(w, h) on
/// every side, clamped to the image. Throws EmptyCrop when nothing remains.
inline cv::Rect crop_rect(const BBox& bbox, int img_w, int img_h, double pad_ratio) {
  require(pad_ratio >= 0.0 && pad_ratio <= 1.0, ErrorCode::InvalidArgument,
          "pad_ratio must be in [0,1]");
  const double pad = pad_ratio * std::max(bbox.w, bbox.h);
  const double x0 = bbox.x - pad, y0 = bbox.y - pad;
  const double x1 = bbox.x + bbox.w + pad, y1 = bbox.y + bbox.h + pad;
  const int xi0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int yi0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int xi1 = std::min(img_w, static_cast<int>(std::ceil(x1)));
  const int yi1 = std::min(img_h, static_cast<int>(std::ceil(y1)));
  require(xi1 > xi0 && yi1 > yi0, ErrorCode::EmptyCrop,
          "bbox (" + std::to_string(bbox.x) + "," + std::to_string(bbox.y) + "," +
              std::to_string(bbox.w) + "," + std::to_string(bbox.h) +
              ") has no overlap with a " + std::to_string(img_w) + "x" +
              std::to_string(img_h) + " image");
  return cv::Rect(xi0, yi0, xi1 - xi0, yi1 - yi0);
}

/// Copies the padded sub-image verbatim (no resampling).
inline cv::Mat extract_crop(const cv::Mat& image, const BBox& bbox, double pad_ratio) {
  require(!image.empty(), ErrorCode::InvalidArgument, "extract_crop: empty image");
  const cv::Rect r = crop_rect(bbox, image.cols, image.rows, pad_ratio);
  return image(r).clone();
}

/// BGR uint8 -> CHW float tensor in RGB channel order, scaled to [0,1] and
/// normalized per channel.
inline Tensor to_chw_tensor(const cv::Mat& image, const std::array<float, 3>& mean,
                            const std::array<float, 3>& stddev) {
  require(image.type() == CV_8UC3, ErrorCode::InvalidArgument, "expected 8-bit 3-channel image");
  const int h = image.rows, w = image.cols;
  Tensor t({3, h, w});
  for (int y = 0; y < h; ++y) {
    const cv::Vec3b* row = image.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      // BGR -> RGB
      for (int c = 0; c < 3; ++c) {
        const float v = static_cast<float>(row[x][2 - c]) / 255.0f;
        t.data()[(c * h + y) * w + x] = (v - mean[c]) / stddev[c];
      }
    }
  }
  return t;
}

}  // namespace artgest::data
