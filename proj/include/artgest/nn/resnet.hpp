#pragma once

#include "artgest/nn/backbone.hpp"

namespace artgest::nn {

/// Standard bottleneck residual unit (1x1 reduce, 3x3, 1x1 expand x4) with a
/// projection shortcut when the shape changes.
class Bottleneck : public Layer {
 public:
  static constexpr int64_t kExpansion = 4;

  Bottleneck(int64_t in_ch, int64_t mid_ch, int64_t stride, Rng& rng) {
    const int64_t out_ch = mid_ch * kExpansion;
    reduce_ = add_module("reduce", std::make_unique<ConvBnAct>(in_ch, mid_ch, 1, 1, 0, rng));
    conv_ = add_module("conv", std::make_unique<ConvBnAct>(mid_ch, mid_ch, 3, stride, 1, rng));
    expand_ = add_module("expand",
                         std::make_unique<ConvBnAct>(mid_ch, out_ch, 1, 1, 0, rng, false));
    if (stride != 1 || in_ch != out_ch)
      shortcut_ = add_module("shortcut",
                             std::make_unique<ConvBnAct>(in_ch, out_ch, 1, stride, 0, rng, false));
  }

  Var forward(const Var& x) override {
    Var main = expand_->forward(conv_->forward(reduce_->forward(x)));
    Var skip = shortcut_ ? shortcut_->forward(x) : x;
    return ops::relu(ops::add(main, skip));
  }

 private:
  ConvBnAct* reduce_;
  ConvBnAct* conv_;
  ConvBnAct* expand_;
  ConvBnAct* shortcut_ = nullptr;
};

class ResNetBackbone : public Backbone {
 public:
  ResNetBackbone(const std::array<int, 4>& blocks, int64_t feature_dim, Rng& rng)
      : feature_dim_(feature_dim) {
    stem_ = add_module("stem", std::make_unique<ConvBnAct>(3, 64, 7, 2, 3, rng));
    int64_t in_ch = 64;
    const std::array<int64_t, 4> mids = {64, 128, 256, 512};
    for (int s = 0; s < 4; ++s) {
      auto stage = std::make_unique<Sequential>();
      const int64_t stride = s == 0 ? 1 : 2;
      for (int b = 0; b < blocks[s]; ++b) {
        stage->push(std::make_unique<Bottleneck>(in_ch, mids[s], b == 0 ? stride : 1, rng));
        in_ch = mids[s] * Bottleneck::kExpansion;
      }
      stages_[s] = add_module("layer" + std::to_string(s + 1), std::move(stage));
    }
    if (feature_dim_ != in_ch)
      proj_ = add_module("proj", std::make_unique<ConvBnAct>(in_ch, feature_dim_, 1, 1, 0, rng));
  }

  Var forward(const Var& images) override {
    Var v = ops::maxpool2d(stem_->forward(images), 3, 2, 1);
    for (auto* stage : stages_) v = stage->forward(v);
    if (proj_) v = proj_->forward(v);
    return ops::global_avg_pool(v);
  }

  int64_t feature_dim() const override { return feature_dim_; }

 private:
  int64_t feature_dim_;
  ConvBnAct* stem_;
  std::array<Sequential*, 4> stages_{};
  ConvBnAct* proj_ = nullptr;
};

inline std::unique_ptr<Backbone> make_resnet(int depth, int64_t feature_dim, Rng& rng) {
  if (depth == 50) return std::make_unique<ResNetBackbone>(std::array{3, 4, 6, 3}, feature_dim, rng);
  if (depth == 101)
    return std::make_unique<ResNetBackbone>(std::array{3, 4, 23, 3}, feature_dim, rng);
  fail(ErrorCode::UnknownBackbone, "resnet depth " + std::to_string(depth));
}

}  // namespace artgest::nn
