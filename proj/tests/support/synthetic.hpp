#pragma once

// Synthetic gesture datasets for tests: small PNG images plus a COCO-style
// annotation file written to a temp directory. Two signal placements are
// supported so tests can control which branch of the network carries the
// label information:
//   * crop signal    — the person box is filled with a class-coded color
//   * context signal — the image border region is class-coded, the person
//                      box is pure noise
// Both can be combined (correlated cue) or disabled per branch.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "artgest/core/rng.hpp"
#include "artgest/data/manifest.hpp"

namespace testsupport {

struct SyntheticSpec {
  int num_classes = 6;
  int per_class = 10;
  int image_size = 48;          // square artwork images
  bool crop_signal = true;      // person box encodes the class
  bool context_signal = true;   // border encodes the class
  double val_fraction = 0.0;    // carve a val split off the head of each class
  double test_fraction = 0.0;   // carve a test split off the tail of each class
  uint64_t seed = 7;
  std::vector<std::string> class_names;  // default: gesture-like names
};

inline std::vector<std::string> default_class_names(int c) {
  static const std::vector<std::string> base = {"sniffing", "holding_nose", "drinking",
                                                "smoking",  "cooking",      "pipe_smoking",
                                                "incense",  "perfume"};
  std::vector<std::string> names;
  for (int i = 0; i < c; ++i)
    names.push_back(i < static_cast<int>(base.size()) ? base[i]
                                                      : "class_" + std::to_string(i));
  return names;
}

// A saturated palette; classes stay far apart in RGB space.
inline cv::Vec3b class_color(int label, int c) {
  const double hue = 180.0 * label / std::max(1, c);
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue, 220, 220));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  return bgr.at<cv::Vec3b>(0, 0);
}

inline void fill_noise(cv::Mat& img, const cv::Rect& r, artgest::Rng& rng) {
  for (int y = r.y; y < r.y + r.height; ++y)
    for (int x = r.x; x < r.x + r.width; ++x)
      img.at<cv::Vec3b>(y, x) =
          cv::Vec3b(static_cast<uchar>(rng.uniform_int(0, 255)),
                    static_cast<uchar>(rng.uniform_int(0, 255)),
                    static_cast<uchar>(rng.uniform_int(0, 255)));
}

struct SyntheticDataset {
  std::filesystem::path root;
  std::filesystem::path annotations;  // COCO-style JSON with split fields
  artgest::data::DatasetManifest manifest;
};

/// Writes images + annotations under `dir` and returns the parsed manifest.
inline SyntheticDataset generate(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  artgest::Rng rng(artgest::derive_seed(spec.seed, {artgest::kSyntheticStream}));

  nlohmann::json root;
  root["categories"] = nlohmann::json::array();
  const auto names =
      spec.class_names.empty() ? default_class_names(spec.num_classes) : spec.class_names;
  for (int i = 0; i < spec.num_classes; ++i)
    root["categories"].push_back({{"id", i + 1}, {"name", names[i]}});
  root["images"] = nlohmann::json::array();
  root["annotations"] = nlohmann::json::array();

  const int s = spec.image_size;
  const int border = s / 6;
  int next_id = 1;
  for (int label = 0; label < spec.num_classes; ++label) {
    const int n_val = static_cast<int>(spec.per_class * spec.val_fraction);
    const int n_test = static_cast<int>(spec.per_class * spec.test_fraction);
    for (int k = 0; k < spec.per_class; ++k) {
      cv::Mat img(s, s, CV_8UC3);
      fill_noise(img, cv::Rect(0, 0, s, s), rng);

      if (spec.context_signal) {
        const cv::Vec3b col = class_color(label, spec.num_classes);
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x)
            if (y < border || y >= s - border || x < border || x >= s - border)
              img.at<cv::Vec3b>(y, x) = col;
      }

      // person box in the interior, jittered
      const int bw = s / 3, bh = s / 3;
      const int bx = border + 1 + static_cast<int>(rng.uniform_int(0, s - 2 * border - bw - 2));
      const int by = border + 1 + static_cast<int>(rng.uniform_int(0, s - 2 * border - bh - 2));
      if (spec.crop_signal) {
        cv::rectangle(img, cv::Rect(bx, by, bw, bh), class_color(label, spec.num_classes),
                      cv::FILLED);
      } else {
        fill_noise(img, cv::Rect(bx, by, bw, bh), rng);
      }

      const std::string file_name = "images/img_" + std::to_string(next_id) + ".png";
      cv::imwrite((dir / file_name).string(), img);
      root["images"].push_back(
          {{"id", next_id}, {"file_name", file_name}, {"width", s}, {"height", s}});
      const std::string split = k < n_val               ? "val"
                                : k >= spec.per_class - n_test ? "test"
                                                               : "train";
      root["annotations"].push_back({{"id", next_id},
                                     {"image_id", next_id},
                                     {"bbox", {bx, by, bw, bh}},
                                     {"category_id", label + 1},
                                     {"split", split}});
      ++next_id;
    }
  }

  SyntheticDataset out;
  out.root = dir;
  out.annotations = dir / "annotations.json";
  std::ofstream(out.annotations) << root.dump(2);
  out.manifest = artgest::data::parse_annotations(out.annotations, std::nullopt, dir);
  return out;
}

/// Fresh temp directory under the system temp root.
inline std::filesystem::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("artgest_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
