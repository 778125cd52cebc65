#pragma once

#include <array>
#include <mutex>
#include <unordered_map>

#include "artgest/core/rng.hpp"
#include "artgest/data/image_io.hpp"

namespace artgest::data {

/// Everything needed to turn a person instance into network inputs.
/// Normalization constants are RGB order, matching to_chw_tensor.
struct PreprocessConfig {
  int crop_size = 224;
  int context_size = 224;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
  double pad_ratio = 0.0;

  bool operator==(const PreprocessConfig&) const = default;
};

struct Example {
  Tensor crop;     // [3, crop_size, crop_size]
  Tensor context;  // [3, context_size, context_size]
  int label_id = -1;
};

namespace detail {

struct AugmentParams {
  bool hflip = false;
  float brightness = 1.0f;
  float contrast = 1.0f;
  float saturation = 1.0f;
};

/// Parameters are drawn in a fixed order so the stream stays stable.
inline AugmentParams sample_augment(Rng& rng) {
  AugmentParams p;
  p.hflip = rng.bernoulli(0.5);
  p.brightness = static_cast<float>(rng.uniform(0.9, 1.1));
  p.contrast = static_cast<float>(rng.uniform(0.9, 1.1));
  p.saturation = static_cast<float>(rng.uniform(0.9, 1.1));
  return p;
}

inline cv::Mat apply_augment(const cv::Mat& src, const AugmentParams& p) {
  cv::Mat img;
  if (p.hflip)
    cv::flip(src, img, 1);
  else
    img = src.clone();

  cv::Mat f;
  img.convertTo(f, CV_32FC3);
  f *= p.brightness;
  // contrast around the image's gray mean, saturation toward per-pixel gray
  cv::Mat gray;
  cv::cvtColor(f, gray, cv::COLOR_BGR2GRAY);
  const double mean_gray = cv::mean(gray)[0];
  for (int y = 0; y < f.rows; ++y) {
    cv::Vec3f* row = f.ptr<cv::Vec3f>(y);
    const float* grow = gray.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = row[x][c];
        v = static_cast<float>(mean_gray) + (v - static_cast<float>(mean_gray)) * p.contrast;
        v = grow[x] + (v - grow[x]) * p.saturation;
        row[x][c] = v;
      }
    }
  }
  cv::Mat out;
  f.convertTo(out, CV_8UC3);  // saturating cast clamps to [0,255]
  return out;
}

inline cv::Mat resize_to(const cv::Mat& src, int size) {
  cv::Mat out;
  cv::resize(src, out, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  return out;
}

}  // namespace detail

/// Builds (crop, context, label) from a decoded image. With augment=false
/// this is a pure function of (image, instance, cfg); with augment=true the
/// flip is geometric and shared between crop and context, and the color
/// jitter uses identical parameters for both.
inline Example make_example_from_image(const cv::Mat& image, const PersonInstance& instance,
                                       const PreprocessConfig& cfg, bool augment,
                                       Rng* rng = nullptr) {
  cv::Mat crop = extract_crop(image, instance.bbox, cfg.pad_ratio);
  cv::Mat context = image;

  if (augment) {
    require(rng != nullptr, ErrorCode::InvalidArgument, "augment=true requires an rng");
    const detail::AugmentParams p = detail::sample_augment(*rng);
    crop = detail::apply_augment(crop, p);
    context = detail::apply_augment(context, p);
  }

  Example ex;
  ex.crop = to_chw_tensor(detail::resize_to(crop, cfg.crop_size), cfg.mean, cfg.stddev);
  ex.context =
      to_chw_tensor(detail::resize_to(context, cfg.context_size), cfg.mean, cfg.stddev);
  ex.label_id = instance.label_id;
  return ex;
}

/// Manifest-level variant: loads the instance's image from disk.
inline Example make_example(const PersonInstance& instance, const DatasetManifest& manifest,
                            const PreprocessConfig& cfg, bool augment, Rng* rng = nullptr) {
  const ImageRecord* rec = manifest.find_image(instance.image_id);
  require(rec != nullptr, ErrorCode::DanglingImageRef,
          "instance " + instance.instance_id + " references missing image");
  return make_example_from_image(load_image(manifest.image_path(*rec)), instance, cfg, augment,
                                 rng);
}

/// Decode cache shared by data-loading workers. Unbounded; gesture datasets
/// are a few thousand images at most.
class ImageStore {
 public:
  explicit ImageStore(const DatasetManifest& manifest) : manifest_(manifest) {}

  cv::Mat get(const std::string& image_id) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = cache_.find(image_id); it != cache_.end()) return it->second;
    }
    const ImageRecord* rec = manifest_.find_image(image_id);
    require(rec != nullptr, ErrorCode::DanglingImageRef, "image '" + image_id + "'");
    cv::Mat img = load_image(manifest_.image_path(*rec));
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(image_id, img).first->second;
  }

 private:
  const DatasetManifest& manifest_;
  std::unordered_map<std::string, cv::Mat> cache_;
  std::mutex mu_;
};

}  // namespace artgest::data
