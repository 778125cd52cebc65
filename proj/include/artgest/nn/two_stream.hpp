#pragma once

#include <optional>

#include "artgest/nn/backbones.hpp"
#include "artgest/variant.hpp"

namespace artgest::nn {

enum class Activation { relu, gelu };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  fail(ErrorCode::InvalidArgument, "unknown activation '" + s + "'");
}

/// The classifier on top of the concatenated branch features: three hidden
/// layers plus the output layer (four layers total).
struct FusionHeadConfig {
  std::vector<int64_t> hidden_dims = {1024, 512, 256};
  double dropout = 0.5;
  Activation activation = Activation::relu;

  bool operator==(const FusionHeadConfig&) const = default;

  void validate() const {
    require(hidden_dims.size() == 3, ErrorCode::InvalidArgument,
            "head needs exactly 3 hidden widths, got " + std::to_string(hidden_dims.size()));
    for (int64_t d : hidden_dims)
      require(d > 0, ErrorCode::InvalidArgument, "hidden widths must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument,
            "dropout must be in [0,1)");
  }
};

inline json head_config_to_json(const FusionHeadConfig& c) {
  return json{{"hidden_dims", c.hidden_dims},
              {"dropout", c.dropout},
              {"activation", to_string(c.activation)}};
}

inline FusionHeadConfig head_config_from_json(const json& j) {
  FusionHeadConfig c;
  c.hidden_dims = j.at("hidden_dims").get<std::vector<int64_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  return c;
}

/// Dropout sits after the first two hidden activations.
class FusionHead : public Module {
 public:
  FusionHead(int64_t in_dim, const FusionHeadConfig& cfg, int64_t num_classes, Rng& rng)
      : cfg_(cfg), in_dim_(in_dim) {
    cfg.validate();
    fc1_ = add_module("fc1", std::make_unique<Linear>(in_dim, cfg.hidden_dims[0], rng));
    fc2_ = add_module("fc2", std::make_unique<Linear>(cfg.hidden_dims[0], cfg.hidden_dims[1], rng));
    fc3_ = add_module("fc3", std::make_unique<Linear>(cfg.hidden_dims[1], cfg.hidden_dims[2], rng));
    fc4_ = add_module("fc4", std::make_unique<Linear>(cfg.hidden_dims[2], num_classes, rng));
  }

  Var forward(const Var& features, Rng* dropout_rng = nullptr) {
    const bool drop = is_training() && cfg_.dropout > 0.0;
    require(!drop || dropout_rng != nullptr, ErrorCode::InvalidArgument,
            "training-mode head forward needs a dropout rng");
    auto act = [&](const Var& v) {
      return cfg_.activation == Activation::relu ? ops::relu(v) : ops::gelu(v);
    };
    Var h = act(fc1_->forward(features));
    if (drop) h = ops::dropout(h, static_cast<float>(cfg_.dropout), true, *dropout_rng);
    h = act(fc2_->forward(h));
    if (drop) h = ops::dropout(h, static_cast<float>(cfg_.dropout), true, *dropout_rng);
    h = act(fc3_->forward(h));
    return fc4_->forward(h);
  }

  int64_t in_dim() const { return in_dim_; }
  Linear* output_layer() { return fc4_; }

 private:
  FusionHeadConfig cfg_;
  int64_t in_dim_;
  Linear *fc1_, *fc2_, *fc3_, *fc4_;
};

/// The two-stream classifier: a person-crop backbone, a whole-image context
/// backbone, and the fusion head over concatenated features in the fixed
/// (person, context) order. The without_context variant builds no context
/// branch and feeds the head person features alone.
class TwoStreamModel : public Module {
 public:
  static constexpr const char* kConcatOrder = "person,context";

  TwoStreamModel(const BackboneSpec& crop_spec, const BackboneSpec& context_spec,
                 const FusionHeadConfig& head_cfg, int num_classes, Variant variant, Rng& rng,
                 const std::filesystem::path& weights_dir = {})
      : crop_spec_(crop_spec),
        context_spec_(context_spec),
        head_cfg_(head_cfg),
        num_classes_(num_classes),
        variant_(variant) {
    require(num_classes >= 2, ErrorCode::InvalidArgument, "need at least 2 classes");
    head_cfg.validate();
    crop_backbone_ = add_module("crop_backbone", build_backbone(crop_spec, rng, weights_dir));
    if (variant == Variant::with_context)
      context_backbone_ =
          add_module("context_backbone", build_backbone(context_spec, rng, weights_dir));
    const int64_t head_in = crop_backbone_->feature_dim() +
                            (context_backbone_ ? context_backbone_->feature_dim() : 0);
    head_ = add_module("head",
                       std::make_unique<FusionHead>(head_in, head_cfg, num_classes, rng));
  }

  /// Person features from crops; depends on crop_batch only.
  Var extract_person_features(const Var& crop_batch) {
    return crop_backbone_->forward(crop_batch);
  }

  /// Context features from full images; depends on context_batch only.
  /// Unavailable on the without_context variant.
  Var extract_context_features(const Var& context_batch) {
    require(context_backbone_ != nullptr, ErrorCode::VariantMismatch,
            "without_context model has no context branch");
    return context_backbone_->forward(context_batch);
  }

  std::pair<Var, Var> extract_features(const Var& crop_batch, const Var& context_batch) {
    require(crop_batch->value.dim(0) == context_batch->value.dim(0), ErrorCode::ShapeMismatch,
            "crop/context batch sizes differ");
    return {extract_person_features(crop_batch), extract_context_features(context_batch)};
  }

  /// head(concat(f_person, f_context)); concat order is fixed. On the
  /// without_context variant pass an empty context Var.
  Var fuse_and_classify(const Var& f_person, const Var& f_context, Rng* dropout_rng = nullptr) {
    require(f_person->value.ndim() == 2 &&
                f_person->value.dim(1) == crop_backbone_->feature_dim(),
            ErrorCode::ShapeMismatch, "person feature width");
    Var fused;
    if (context_backbone_) {
      require(f_context != nullptr, ErrorCode::ShapeMismatch,
              "with_context model needs context features");
      require(f_context->value.ndim() == 2 &&
                  f_context->value.dim(1) == context_backbone_->feature_dim(),
              ErrorCode::ShapeMismatch, "context feature width");
      require(f_person->value.dim(0) == f_context->value.dim(0), ErrorCode::ShapeMismatch,
              "feature batch sizes differ");
      fused = ops::concat_lastdim(f_person, f_context);
    } else {
      require(f_context == nullptr, ErrorCode::VariantMismatch,
              "without_context model takes no context features");
      fused = f_person;
    }
    return head_->forward(fused, dropout_rng);
  }

  /// Full forward pass. context_batch is ignored on the without_context
  /// variant (it may be a null Var).
  Var forward(const Var& crop_batch, const Var& context_batch, Rng* dropout_rng = nullptr) {
    Var f_person = extract_person_features(crop_batch);
    Var f_context;
    if (context_backbone_) {
      require(context_batch != nullptr, ErrorCode::ShapeMismatch,
              "with_context model needs a context batch");
      f_context = extract_context_features(context_batch);
    }
    return fuse_and_classify(f_person, f_context, dropout_rng);
  }

  int num_classes() const { return num_classes_; }
  Variant variant() const { return variant_; }
  const BackboneSpec& crop_spec() const { return crop_spec_; }
  const BackboneSpec& context_spec() const { return context_spec_; }
  const FusionHeadConfig& head_config() const { return head_cfg_; }
  Backbone* crop_backbone() { return crop_backbone_; }
  Backbone* context_backbone() { return context_backbone_; }
  FusionHead* head() { return head_; }

 private:
  BackboneSpec crop_spec_, context_spec_;
  FusionHeadConfig head_cfg_;
  int num_classes_;
  Variant variant_;
  Backbone* crop_backbone_ = nullptr;
  Backbone* context_backbone_ = nullptr;
  FusionHead* head_ = nullptr;
};

inline std::unique_ptr<TwoStreamModel> build_model(
    const BackboneSpec& crop_spec, const BackboneSpec& context_spec,
    const FusionHeadConfig& head_cfg, int num_classes, Rng& rng,
    Variant variant = Variant::with_context, const std::filesystem::path& weights_dir = {}) {
  return std::make_unique<TwoStreamModel>(crop_spec, context_spec, head_cfg, num_classes,
                                          variant, rng, weights_dir);
}

}  // namespace artgest::nn
