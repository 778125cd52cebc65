#pragma once

#include "artgest/data/example.hpp"
#include "artgest/data/label_map.hpp"
#include "artgest/nn/two_stream.hpp"

namespace artgest::nn {

inline json preprocess_to_json(const data::PreprocessConfig& p) {
  return json{{"crop_size", p.crop_size},
              {"context_size", p.context_size},
              {"mean", p.mean},
              {"std", p.stddev},
              {"pad_ratio", p.pad_ratio}};
}

inline data::PreprocessConfig preprocess_from_json(const json& j) {
  data::PreprocessConfig p;
  p.crop_size = j.at("crop_size").get<int>();
  p.context_size = j.at("context_size").get<int>();
  p.mean = j.at("mean").get<std::array<float, 3>>();
  p.stddev = j.at("std").get<std::array<float, 3>>();
  p.pad_ratio = j.at("pad_ratio").get<double>();
  return p;
}

/// A model plus everything needed to run it on raw images.
struct Checkpoint {
  std::unique_ptr<TwoStreamModel> model;
  data::LabelMap labels;
  data::PreprocessConfig preprocess;
};

/// Single-file binary checkpoint: JSON header (format version, backbone
/// specs, head config, label map, concat order, variant, preprocessing)
/// plus the raw parameter and buffer payload.
inline void save_checkpoint(TwoStreamModel& model, const data::LabelMap& labels,
                            const data::PreprocessConfig& preprocess,
                            const std::filesystem::path& path) {
  json meta;
  meta["kind"] = "two_stream_checkpoint";
  meta["crop_backbone"] = backbone_spec_to_json(model.crop_spec());
  meta["context_backbone"] = backbone_spec_to_json(model.context_spec());
  meta["head"] = head_config_to_json(model.head_config());
  meta["num_classes"] = model.num_classes();
  meta["variant"] = to_string(model.variant());
  meta["concat_order"] = TwoStreamModel::kConcatOrder;
  meta["label_map"] = labels.names();
  meta["preprocess"] = preprocess_to_json(preprocess);
  archive::save(path, meta, model.named_state());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const archive::Archive ar = archive::load(path);
  const json& meta = ar.meta;
  require(meta.value("kind", "") == "two_stream_checkpoint", ErrorCode::CorruptCheckpoint,
          path.string() + ": not a model checkpoint");
  require(meta.value("concat_order", "") == TwoStreamModel::kConcatOrder,
          ErrorCode::CorruptCheckpoint,
          path.string() + ": unexpected concat order '" + meta.value("concat_order", "") + "'");

  Checkpoint ckpt;
  try {
    ckpt.labels = data::LabelMap::from_names(meta.at("label_map").get<std::vector<std::string>>());
    ckpt.preprocess = preprocess_from_json(meta.at("preprocess"));
    // parameters are overwritten below; the init rng is irrelevant
    Rng rng(0);
    ckpt.model = std::make_unique<TwoStreamModel>(
        backbone_spec_from_json(meta.at("crop_backbone")),
        backbone_spec_from_json(meta.at("context_backbone")),
        head_config_from_json(meta.at("head")), meta.at("num_classes").get<int>(),
        variant_from_string(meta.at("variant").get<std::string>()), rng);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, path.string() + ": header: " + e.what());
  }

  auto state = ckpt.model->named_state();
  require(state.size() == ar.tensors.size(), ErrorCode::CorruptCheckpoint,
          path.string() + ": expected " + std::to_string(state.size()) + " tensors, found " +
              std::to_string(ar.tensors.size()));
  for (auto& [name, tensor] : state) {
    const Tensor* src = ar.find(name);
    require(src != nullptr, ErrorCode::CorruptCheckpoint, path.string() + ": missing " + name);
    require(src->shape() == tensor.shape(), ErrorCode::CorruptCheckpoint,
            path.string() + ": shape mismatch for " + name);
    std::copy(src->begin(), src->end(), tensor.begin());
  }
  ckpt.model->set_training(false);
  return ckpt;
}

}  // namespace artgest::nn
