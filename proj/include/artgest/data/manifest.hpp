#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "artgest/core/error.hpp"
#include "artgest/data/label_map.hpp"

namespace artgest::data {

using nlohmann::json;

/// Pixel-space box, top-left anchored. Values are stored as parsed; bounds
/// clamping happens where pixels are touched (validation, cropping).
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  bool operator==(const BBox&) const = default;

  /// Intersection with a width x height image, clamped to non-negative size.
  BBox clamped(double img_w, double img_h) const {
    const double x0 = std::max(0.0, x);
    const double y0 = std::max(0.0, y);
    const double x1 = std::min(img_w, x + w);
    const double y1 = std::min(img_h, y + h);
    return BBox{x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
  }

  double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
};

struct ImageRecord {
  std::string image_id;
  std::string file_path;  // relative to the manifest's images_root
  int width = 0;
  int height = 0;

  bool operator==(const ImageRecord&) const = default;
};

struct PersonInstance {
  std::string instance_id;
  std::string image_id;
  BBox bbox;
  int label_id = -1;

  bool operator==(const PersonInstance&) const = default;
};

/// One dataset issue found by validation; collected, never thrown.
struct Issue {
  std::string rule;
  std::string subject;
  std::string message;

  std::string str() const { return rule + " [" + subject + "]: " + message; }
};

/// Immutable after construction; safe to share across threads.
struct DatasetManifest {
  std::vector<ImageRecord> images;
  std::vector<PersonInstance> instances;
  LabelMap labels;
  std::map<std::string, std::set<std::string>> splits;  // split name -> instance ids
  std::filesystem::path images_root;

  const ImageRecord* find_image(const std::string& image_id) const {
    for (const auto& im : images)
      if (im.image_id == image_id) return &im;
    return nullptr;
  }

  const PersonInstance* find_instance(const std::string& instance_id) const {
    for (const auto& in : instances)
      if (in.instance_id == instance_id) return &in;
    return nullptr;
  }

  bool has_split(const std::string& name) const { return splits.count(name) > 0; }

  /// Instances of a split in manifest order (deterministic).
  std::vector<const PersonInstance*> split_instances(const std::string& split) const {
    auto it = splits.find(split);
    require(it != splits.end(), ErrorCode::UnknownSplit, "split '" + split + "'");
    std::vector<const PersonInstance*> out;
    for (const auto& in : instances)
      if (it->second.count(in.instance_id)) out.push_back(&in);
    return out;
  }

  std::filesystem::path image_path(const ImageRecord& rec) const {
    return images_root.empty() ? std::filesystem::path(rec.file_path)
                               : images_root / rec.file_path;
  }

  bool operator==(const DatasetManifest& o) const {
    return images == o.images && instances == o.instances && labels == o.labels &&
           splits == o.splits;
  }
};

// ---------------------------------------------------------------------------
// parsing

namespace detail {

inline std::string id_to_string(const json& j, const std::string& path) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<int64_t>());
  fail(ErrorCode::MalformedAnnotation, path + ": id must be string or integer");
}

inline const json& member(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  require(it != j.end(), ErrorCode::MalformedAnnotation, path + ": missing key '" + key + "'");
  return *it;
}

inline double number_at(const json& j, const std::string& path) {
  require(j.is_number(), ErrorCode::MalformedAnnotation, path + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

/// Parses a COCO-style annotation document: `images`, `annotations` with
/// [x,y,w,h] boxes, `categories`, and an optional per-annotation `split`
/// field. Annotations without a split land in `default_split`. When a label
/// map is supplied, category names outside it are an error; otherwise the
/// file's categories (ordered by category id, background first) define it.
inline DatasetManifest parse_annotations_json(const json& root,
                                              std::optional<LabelMap> label_map = std::nullopt,
                                              const std::filesystem::path& images_root = {},
                                              const std::string& default_split = "train") {
  require(root.is_object(), ErrorCode::MalformedAnnotation, "$: document must be an object");

  DatasetManifest m;
  m.images_root = images_root;

  // categories -> label map and category_id -> label_id table
  const json& cats = detail::member(root, "categories", "$");
  require(cats.is_array(), ErrorCode::MalformedAnnotation, "$.categories: expected an array");
  std::vector<std::pair<int64_t, std::string>> cat_list;
  for (size_t i = 0; i < cats.size(); ++i) {
    const std::string path = "$.categories[" + std::to_string(i) + "]";
    const json& c = cats[i];
    require(c.is_object(), ErrorCode::MalformedAnnotation, path + ": expected an object");
    const json& id = detail::member(c, "id", path);
    require(id.is_number_integer(), ErrorCode::MalformedAnnotation,
            path + ".id: expected an integer");
    const json& name = detail::member(c, "name", path);
    require(name.is_string(), ErrorCode::MalformedAnnotation, path + ".name: expected a string");
    cat_list.emplace_back(id.get<int64_t>(), name.get<std::string>());
  }
  std::sort(cat_list.begin(), cat_list.end());
  for (size_t i = 1; i < cat_list.size(); ++i)
    require(cat_list[i].first != cat_list[i - 1].first, ErrorCode::MalformedAnnotation,
            "$.categories: duplicate category id " + std::to_string(cat_list[i].first));

  if (label_map) {
    m.labels = *label_map;
    for (const auto& [cid, cname] : cat_list)
      require(m.labels.contains(cname), ErrorCode::UnknownLabel,
              "category '" + cname + "' not in the supplied label map");
  } else {
    std::vector<std::string> names;
    for (const auto& [cid, cname] : cat_list) names.push_back(cname);
    m.labels = LabelMap::from_names(std::move(names));
  }
  std::unordered_map<int64_t, int> cat_to_label;
  for (const auto& [cid, cname] : cat_list) cat_to_label[cid] = m.labels.index_of(cname);

  // images
  const json& images = detail::member(root, "images", "$");
  require(images.is_array(), ErrorCode::MalformedAnnotation, "$.images: expected an array");
  std::unordered_map<std::string, const ImageRecord*> by_id;
  for (size_t i = 0; i < images.size(); ++i) {
    const std::string path = "$.images[" + std::to_string(i) + "]";
    const json& im = images[i];
    require(im.is_object(), ErrorCode::MalformedAnnotation, path + ": expected an object");
    ImageRecord rec;
    rec.image_id = detail::id_to_string(detail::member(im, "id", path), path + ".id");
    const json& fn = detail::member(im, "file_name", path);
    require(fn.is_string(), ErrorCode::MalformedAnnotation, path + ".file_name: expected a string");
    rec.file_path = fn.get<std::string>();
    rec.width = static_cast<int>(detail::number_at(detail::member(im, "width", path), path + ".width"));
    rec.height =
        static_cast<int>(detail::number_at(detail::member(im, "height", path), path + ".height"));
    require(!by_id.count(rec.image_id), ErrorCode::MalformedAnnotation,
            path + ": duplicate image id '" + rec.image_id + "'");
    m.images.push_back(rec);
    by_id[rec.image_id] = nullptr;
  }

  // annotations
  const json& anns = detail::member(root, "annotations", "$");
  require(anns.is_array(), ErrorCode::MalformedAnnotation, "$.annotations: expected an array");
  std::set<std::string> seen_instance_ids;
  for (size_t i = 0; i < anns.size(); ++i) {
    const std::string path = "$.annotations[" + std::to_string(i) + "]";
    const json& a = anns[i];
    require(a.is_object(), ErrorCode::MalformedAnnotation, path + ": expected an object");
    PersonInstance inst;
    inst.instance_id = detail::id_to_string(detail::member(a, "id", path), path + ".id");
    require(!seen_instance_ids.count(inst.instance_id), ErrorCode::MalformedAnnotation,
            path + ": duplicate annotation id '" + inst.instance_id + "'");
    seen_instance_ids.insert(inst.instance_id);
    inst.image_id =
        detail::id_to_string(detail::member(a, "image_id", path), path + ".image_id");
    require(by_id.count(inst.image_id), ErrorCode::DanglingImageRef,
            path + ".image_id: '" + inst.image_id + "' not present in images");

    const json& bbox = detail::member(a, "bbox", path);
    require(bbox.is_array() && bbox.size() == 4, ErrorCode::MalformedAnnotation,
            path + ".bbox: expected [x,y,w,h]");
    inst.bbox = BBox{detail::number_at(bbox[0], path + ".bbox[0]"),
                     detail::number_at(bbox[1], path + ".bbox[1]"),
                     detail::number_at(bbox[2], path + ".bbox[2]"),
                     detail::number_at(bbox[3], path + ".bbox[3]")};

    const json& cat = detail::member(a, "category_id", path);
    require(cat.is_number_integer(), ErrorCode::MalformedAnnotation,
            path + ".category_id: expected an integer");
    auto it = cat_to_label.find(cat.get<int64_t>());
    require(it != cat_to_label.end(), ErrorCode::UnknownLabel,
            path + ".category_id: unknown category " + std::to_string(cat.get<int64_t>()));
    inst.label_id = it->second;

    std::string split = default_split;
    if (auto s = a.find("split"); s != a.end()) {
      require(s->is_string(), ErrorCode::MalformedAnnotation, path + ".split: expected a string");
      split = s->get<std::string>();
    }
    m.splits[split].insert(inst.instance_id);
    m.instances.push_back(std::move(inst));
  }

  return m;
}

inline DatasetManifest parse_annotations(const std::filesystem::path& path,
                                         std::optional<LabelMap> label_map = std::nullopt,
                                         const std::filesystem::path& images_root = {},
                                         const std::string& default_split = "train") {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedAnnotation, path.string() + ": " + e.what());
  }
  return parse_annotations_json(root, std::move(label_map), images_root, default_split);
}

/// COCO-style re-serialization; parse(serialize(m)) == m field-by-field.
inline json serialize_manifest(const DatasetManifest& m) {
  json root;
  root["categories"] = json::array();
  for (int i = 0; i < m.labels.size(); ++i)
    root["categories"].push_back({{"id", i}, {"name", m.labels.names()[i]}});
  root["images"] = json::array();
  for (const auto& im : m.images)
    root["images"].push_back({{"id", im.image_id},
                              {"file_name", im.file_path},
                              {"width", im.width},
                              {"height", im.height}});
  std::unordered_map<std::string, std::string> split_of;
  for (const auto& [name, ids] : m.splits)
    for (const auto& id : ids) split_of[id] = name;
  root["annotations"] = json::array();
  for (const auto& in : m.instances) {
    json a = {{"id", in.instance_id},
              {"image_id", in.image_id},
              {"bbox", {in.bbox.x, in.bbox.y, in.bbox.w, in.bbox.h}},
              {"category_id", in.label_id}};
    if (auto it = split_of.find(in.instance_id); it != split_of.end()) a["split"] = it->second;
    root["annotations"].push_back(std::move(a));
  }
  return root;
}

// ---------------------------------------------------------------------------
// validation

/// Checks every manifest invariant plus image-file readability. Issues are
/// returned, never thrown; an empty list means the manifest is sound.
inline std::vector<Issue> validate_manifest(const DatasetManifest& m,
                                            bool check_files = true) {
  std::vector<Issue> issues;
  auto add = [&](std::string rule, std::string subject, std::string msg) {
    issues.push_back({std::move(rule), std::move(subject), std::move(msg)});
  };

  std::unordered_map<std::string, const ImageRecord*> by_id;
  for (const auto& im : m.images) {
    if (by_id.count(im.image_id))
      add("image.unique_id", im.image_id, "duplicate image id");
    by_id[im.image_id] = &im;
    if (im.width <= 0 || im.height <= 0)
      add("image.positive_size", im.image_id,
          "width/height must be positive, got " + std::to_string(im.width) + "x" +
              std::to_string(im.height));
    if (check_files) {
      const auto p = m.image_path(im);
      std::error_code ec;
      if (!std::filesystem::is_regular_file(p, ec) || std::filesystem::file_size(p, ec) == 0)
        add("image.file_readable", im.image_id, "unreadable image file " + p.string());
    }
  }

  std::set<std::string> instance_ids;
  for (const auto& in : m.instances) {
    if (instance_ids.count(in.instance_id))
      add("instance.unique_id", in.instance_id, "duplicate instance id");
    instance_ids.insert(in.instance_id);

    if (in.label_id < 0 || in.label_id >= m.labels.size())
      add("instance.label_in_range", in.instance_id,
          "label id " + std::to_string(in.label_id) + " outside [0," +
              std::to_string(m.labels.size()) + ")");
    if (in.bbox.w <= 0 || in.bbox.h <= 0)
      add("bbox.positive_size", in.instance_id,
          "bbox w/h must be positive, got " + std::to_string(in.bbox.w) + "x" +
              std::to_string(in.bbox.h));

    auto it = by_id.find(in.image_id);
    if (it == by_id.end()) {
      add("instance.image_exists", in.instance_id,
          "references missing image '" + in.image_id + "'");
    } else if (in.bbox.clamped(it->second->width, it->second->height).area() <= 0) {
      add("bbox.inside_image", in.instance_id, "bbox does not intersect its image");
    }
  }

  // splits: pairwise disjoint, union covers all instances, ids resolve
  std::map<std::string, std::string> first_split_of;
  size_t split_total = 0;
  for (const auto& [split, ids] : m.splits) {
    split_total += ids.size();
    for (const auto& id : ids) {
      if (!instance_ids.count(id))
        add("split.known_instance", id, "split '" + split + "' references unknown instance");
      auto [it, inserted] = first_split_of.emplace(id, split);
      if (!inserted)
        add("split.disjoint", id,
            "instance in both '" + it->second + "' and '" + split + "'");
    }
  }
  if (first_split_of.size() < instance_ids.size())
    for (const auto& id : instance_ids)
      if (!first_split_of.count(id))
        add("split.total", id, "instance belongs to no split");
  (void)split_total;

  return issues;
}

// ---------------------------------------------------------------------------
// class distribution

/// Per-class instance counts over one split, zero-count classes included.
inline std::map<std::string, int64_t> class_distribution(const DatasetManifest& m,
                                                         const std::string& split) {
  auto it = m.splits.find(split);
  require(it != m.splits.end(), ErrorCode::UnknownSplit, "split '" + split + "'");
  std::map<std::string, int64_t> counts;
  for (const auto& name : m.labels.names()) counts[name] = 0;
  for (const auto& in : m.instances)
    if (it->second.count(in.instance_id)) ++counts[m.labels.name_of(in.label_id)];
  return counts;
}

}  // namespace artgest::data
