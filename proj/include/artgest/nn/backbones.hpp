#pragma once

#include "artgest/nn/backbone.hpp"
#include "artgest/nn/hrnet.hpp"
#include "artgest/nn/resnet.hpp"
#include "artgest/nn/swin.hpp"

namespace artgest::nn {

inline std::unique_ptr<Backbone> build_backbone(const BackboneSpec& spec, Rng& rng,
                                                const std::filesystem::path& weights_dir = {}) {
  std::unique_ptr<Backbone> model;
  switch (spec.family) {
    case BackboneFamily::tiny_test:
      model = std::make_unique<TinyTestBackbone>(spec.resolved_feature_dim(), rng);
      break;
    case BackboneFamily::resnet50:
      model = make_resnet(50, spec.resolved_feature_dim(), rng);
      break;
    case BackboneFamily::resnet101:
      model = make_resnet(101, spec.resolved_feature_dim(), rng);
      break;
    case BackboneFamily::hrnet_w32:
      model = make_hrnet_w32(spec.resolved_feature_dim(), rng);
      break;
    case BackboneFamily::swin_v2:
      model = make_swin_v2(spec.resolved_feature_dim(), rng);
      break;
  }
  require(model != nullptr, ErrorCode::UnknownBackbone, "unhandled backbone family");
  if (spec.pretrained) load_pretrained_weights(*model, spec, weights_dir);
  return model;
}

}  // namespace artgest::nn
