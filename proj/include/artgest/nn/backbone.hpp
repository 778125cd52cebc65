#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>

#include "artgest/core/serialize.hpp"
#include "artgest/nn/layers.hpp"

namespace artgest::nn {

enum class BackboneFamily { tiny_test, resnet50, resnet101, hrnet_w32, swin_v2 };

inline const char* to_string(BackboneFamily f) {
  switch (f) {
    case BackboneFamily::tiny_test: return "tiny_test";
    case BackboneFamily::resnet50: return "resnet50";
    case BackboneFamily::resnet101: return "resnet101";
    case BackboneFamily::hrnet_w32: return "hrnet_w32";
    case BackboneFamily::swin_v2: return "swin_v2";
  }
  return "?";
}

inline BackboneFamily backbone_family_from_string(const std::string& s) {
  if (s == "tiny_test") return BackboneFamily::tiny_test;
  if (s == "resnet50") return BackboneFamily::resnet50;
  if (s == "resnet101") return BackboneFamily::resnet101;
  if (s == "hrnet_w32") return BackboneFamily::hrnet_w32;
  if (s == "swin_v2") return BackboneFamily::swin_v2;
  fail(ErrorCode::UnknownBackbone, "'" + s + "'");
}

/// Pooled feature width each family produces by default.
inline int64_t default_feature_dim(BackboneFamily f) {
  switch (f) {
    case BackboneFamily::tiny_test: return 32;
    case BackboneFamily::resnet50: return 2048;
    case BackboneFamily::resnet101: return 2048;
    case BackboneFamily::hrnet_w32: return 2048;
    case BackboneFamily::swin_v2: return 768;
  }
  return 0;
}

struct BackboneSpec {
  BackboneFamily family = BackboneFamily::tiny_test;
  bool pretrained = false;
  int64_t feature_dim = 0;  // 0 = family default

  int64_t resolved_feature_dim() const {
    return feature_dim > 0 ? feature_dim : default_feature_dim(family);
  }

  bool operator==(const BackboneSpec&) const = default;
};

inline json backbone_spec_to_json(const BackboneSpec& s) {
  return json{{"family", to_string(s.family)},
              {"pretrained", s.pretrained},
              {"feature_dim", s.resolved_feature_dim()}};
}

inline BackboneSpec backbone_spec_from_json(const json& j) {
  BackboneSpec s;
  s.family = backbone_family_from_string(j.at("family").get<std::string>());
  s.pretrained = j.value("pretrained", false);
  s.feature_dim = j.value("feature_dim", int64_t{0});
  return s;
}

/// Image encoder: [N,3,H,W] -> pooled features [N, feature_dim].
class Backbone : public Module {
 public:
  virtual Var forward(const Var& images) = 0;
  virtual int64_t feature_dim() const = 0;
};

/// Fixed small convolutional stack for CI-scale runs. Two stride-2 stages,
/// an optional 1x1 projection when a non-default width is requested, then
/// global average pooling.
class TinyTestBackbone : public Backbone {
 public:
  TinyTestBackbone(int64_t feature_dim, Rng& rng) : feature_dim_(feature_dim) {
    stage1_ = add_module("stage1", std::make_unique<ConvBnAct>(3, 16, 3, 2, 1, rng));
    stage2_ = add_module("stage2", std::make_unique<ConvBnAct>(16, 32, 3, 2, 1, rng));
    if (feature_dim_ != 32)
      proj_ = add_module("proj", std::make_unique<ConvBnAct>(32, feature_dim_, 1, 1, 0, rng));
  }

  Var forward(const Var& images) override {
    Var v = stage2_->forward(stage1_->forward(images));
    if (proj_) v = proj_->forward(v);
    return ops::global_avg_pool(v);
  }

  int64_t feature_dim() const override { return feature_dim_; }

 private:
  int64_t feature_dim_;
  ConvBnAct* stage1_ = nullptr;
  ConvBnAct* stage2_ = nullptr;
  ConvBnAct* proj_ = nullptr;
};

/// Directory searched for <family>.agw weight archives: explicit argument,
/// else $ARTGEST_WEIGHTS_DIR.
inline std::filesystem::path resolve_weights_dir(const std::filesystem::path& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("ARTGEST_WEIGHTS_DIR")) return env;
  return {};
}

inline void load_pretrained_weights(Backbone& model, const BackboneSpec& spec,
                                    const std::filesystem::path& weights_dir) {
  const auto dir = resolve_weights_dir(weights_dir);
  const auto path = dir / (std::string(to_string(spec.family)) + ".agw");
  if (dir.empty() || !std::filesystem::exists(path))
    fail(ErrorCode::PretrainedWeightsUnavailable,
         std::string("no weights archive for ") + to_string(spec.family) +
             (dir.empty() ? " (set ARTGEST_WEIGHTS_DIR or model.weights_dir)"
                          : " at " + path.string()));
  const archive::Archive ar = archive::load(path);
  for (auto& [name, tensor] : model.named_state()) {
    const Tensor* src = ar.find(name);
    require(src != nullptr, ErrorCode::PretrainedWeightsUnavailable,
            path.string() + ": missing tensor " + name);
    require(src->shape() == tensor.shape(), ErrorCode::PretrainedWeightsUnavailable,
            path.string() + ": shape mismatch for " + name);
    std::copy(src->begin(), src->end(), tensor.begin());
  }
}

}  // namespace artgest::nn
