#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "artgest/data/manifest.hpp"

namespace artgest::infer {

struct Detection {
  data::BBox bbox;
  double score = 1.0;
};

/// Person detections from an external detector, keyed by image id.
struct DetectionSet {
  std::map<std::string, std::vector<Detection>> by_image;
  std::string source;

  size_t total() const {
    size_t n = 0;
    for (const auto& [id, dets] : by_image) n += dets.size();
    return n;
  }
};

/// COCO results JSON: a list of {image_id, category_id, bbox:[x,y,w,h],
/// score}. Detections scoring below `score_threshold` are dropped.
inline DetectionSet load_detections_json(const json& root, double score_threshold = 0.0,
                                         const std::string& source = "file") {
  require(root.is_array(), ErrorCode::MalformedDetections, "$: expected a result array");
  DetectionSet out;
  out.source = source;
  for (size_t i = 0; i < root.size(); ++i) {
    const std::string path = "$[" + std::to_string(i) + "]";
    const json& d = root[i];
    require(d.is_object(), ErrorCode::MalformedDetections, path + ": expected an object");
    auto id_it = d.find("image_id");
    require(id_it != d.end(), ErrorCode::MalformedDetections, path + ": missing image_id");
    std::string image_id;
    if (id_it->is_string())
      image_id = id_it->get<std::string>();
    else if (id_it->is_number_integer())
      image_id = std::to_string(id_it->get<int64_t>());
    else
      fail(ErrorCode::MalformedDetections, path + ".image_id: must be string or integer");

    auto bbox_it = d.find("bbox");
    require(bbox_it != d.end() && bbox_it->is_array() && bbox_it->size() == 4,
            ErrorCode::MalformedDetections, path + ".bbox: expected [x,y,w,h]");
    for (const auto& v : *bbox_it)
      require(v.is_number(), ErrorCode::MalformedDetections, path + ".bbox: non-numeric entry");
    Detection det;
    det.bbox = data::BBox{(*bbox_it)[0].get<double>(), (*bbox_it)[1].get<double>(),
                          (*bbox_it)[2].get<double>(), (*bbox_it)[3].get<double>()};
    require(det.bbox.w > 0 && det.bbox.h > 0, ErrorCode::MalformedDetections,
            path + ".bbox: non-positive size");

    auto score_it = d.find("score");
    require(score_it != d.end() && score_it->is_number(), ErrorCode::MalformedDetections,
            path + ".score: expected a number");
    det.score = score_it->get<double>();
    require(det.score >= 0.0 && det.score <= 1.0, ErrorCode::MalformedDetections,
            path + ".score: outside [0,1]");

    if (det.score >= score_threshold) out.by_image[image_id].push_back(det);
  }
  return out;
}

inline DetectionSet load_detections(const std::filesystem::path& path,
                                    double score_threshold = 0.0) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedDetections, path.string() + ": " + e.what());
  }
  return load_detections_json(root, score_threshold, path.filename().string());
}

/// Ground-truth boxes of a split exported as score-1.0 detections; useful
/// for scoring the full pipeline against annotated data.
inline DetectionSet gt_detections(const data::DatasetManifest& manifest,
                                  const std::string& split) {
  DetectionSet out;
  out.source = "ground_truth:" + split;
  for (const auto* inst : manifest.split_instances(split))
    out.by_image[inst->image_id].push_back(Detection{inst->bbox, 1.0});
  return out;
}

/// Enforces the detection invariants against a concrete image.
inline void validate_detections(const std::vector<Detection>& dets, int img_w, int img_h) {
  for (const auto& d : dets) {
    require(d.score >= 0.0 && d.score <= 1.0, ErrorCode::InvalidArgument,
            "detection score outside [0,1]");
    require(d.bbox.w > 0 && d.bbox.h > 0, ErrorCode::InvalidArgument,
            "detection box has non-positive size");
    require(d.bbox.clamped(img_w, img_h).area() > 0, ErrorCode::InvalidArgument,
            "detection box does not intersect the image");
  }
}

/// Pluggable person source. Built-ins: "null" returns the full-image box,
/// "replay" serves entries of a loaded DetectionSet.
using DetectorAdapter =
    std::function<std::vector<Detection>(const std::string& image_id, const cv::Mat& image)>;

inline DetectorAdapter make_adapter(const std::string& name,
                                    const DetectionSet* replay_source = nullptr) {
  if (name == "null") {
    return [](const std::string&, const cv::Mat& image) {
      return std::vector<Detection>{
          {data::BBox{0, 0, static_cast<double>(image.cols), static_cast<double>(image.rows)},
           1.0}};
    };
  }
  if (name == "replay") {
    require(replay_source != nullptr, ErrorCode::AdapterUnavailable,
            "replay adapter needs a loaded detections file");
    const DetectionSet source = *replay_source;
    return [source](const std::string& image_id, const cv::Mat&) {
      auto it = source.by_image.find(image_id);
      return it == source.by_image.end() ? std::vector<Detection>{} : it->second;
    };
  }
  fail(ErrorCode::AdapterUnavailable, "no detector adapter named '" + name + "'");
}

}  // namespace artgest::infer
