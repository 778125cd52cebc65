#pragma once

#include "artgest/nn/resnet.hpp"

namespace artgest::nn {

/// 3x3 + 3x3 residual unit used inside the parallel branches.
class BasicBlock : public Layer {
 public:
  BasicBlock(int64_t channels, Rng& rng) {
    conv1_ = add_module("conv1", std::make_unique<ConvBnAct>(channels, channels, 3, 1, 1, rng));
    conv2_ =
        add_module("conv2", std::make_unique<ConvBnAct>(channels, channels, 3, 1, 1, rng, false));
  }

  Var forward(const Var& x) override {
    return ops::relu(ops::add(conv2_->forward(conv1_->forward(x)), x));
  }

 private:
  ConvBnAct* conv1_;
  ConvBnAct* conv2_;
};

/// Exchange unit: every output branch receives the sum of all input branches
/// brought to its resolution/width (1x1 conv + nearest upsampling from
/// coarser branches, strided 3x3 chains from finer ones).
class HrnetFuse : public Module {
 public:
  HrnetFuse(const std::vector<int64_t>& widths, Rng& rng) : widths_(widths) {
    const int n = static_cast<int>(widths.size());
    paths_.assign(n, std::vector<Layer*>(n, nullptr));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::string name = "path" + std::to_string(j) + "to" + std::to_string(i);
        if (j > i) {
          paths_[i][j] = add_module(
              name, std::make_unique<ConvBnAct>(widths[j], widths[i], 1, 1, 0, rng, false));
        } else {
          auto seq = std::make_unique<Sequential>();
          for (int k = 0; k < i - j; ++k) {
            const bool last = k == i - j - 1;
            seq->push(std::make_unique<ConvBnAct>(widths[j], last ? widths[i] : widths[j], 3, 2,
                                                  1, rng, !last));
          }
          paths_[i][j] = add_module(name, std::move(seq));
        }
      }
  }

  std::vector<Var> forward(const std::vector<Var>& xs) {
    const int n = static_cast<int>(xs.size());
    std::vector<Var> out(n);
    for (int i = 0; i < n; ++i) {
      std::vector<Var> terms;
      for (int j = 0; j < n; ++j) {
        if (j == i) {
          terms.push_back(xs[j]);
        } else if (j > i) {
          terms.push_back(
              ops::nearest_upsample2d(paths_[i][j]->forward(xs[j]), int64_t{1} << (j - i)));
        } else {
          terms.push_back(paths_[i][j]->forward(xs[j]));
        }
      }
      out[i] = ops::relu(ops::add_n(terms));
    }
    return out;
  }

 private:
  std::vector<int64_t> widths_;
  std::vector<std::vector<Layer*>> paths_;
};

/// One high-resolution module: 4 basic blocks per branch, then fusion.
class HrnetModule : public Module {
 public:
  HrnetModule(const std::vector<int64_t>& widths, Rng& rng) {
    for (size_t b = 0; b < widths.size(); ++b) {
      auto seq = std::make_unique<Sequential>();
      for (int k = 0; k < 4; ++k) seq->push(std::make_unique<BasicBlock>(widths[b], rng));
      branches_.push_back(add_module("branch" + std::to_string(b), std::move(seq)));
    }
    fuse_ = add_module("fuse", std::make_unique<HrnetFuse>(widths, rng));
  }

  std::vector<Var> forward(const std::vector<Var>& xs) {
    std::vector<Var> mid(xs.size());
    for (size_t b = 0; b < xs.size(); ++b) mid[b] = branches_[b]->forward(xs[b]);
    return fuse_->forward(mid);
  }

 private:
  std::vector<Sequential*> branches_;
  HrnetFuse* fuse_;
};

/// HRNet-W32 classification network: stem, a bottleneck stage, three
/// multi-branch stages at widths {32,64,128,256}, and the incremental
/// head that aggregates the branches into a 2048-wide pooled vector.
class HrnetW32Backbone : public Backbone {
 public:
  HrnetW32Backbone(int64_t feature_dim, Rng& rng) : feature_dim_(feature_dim) {
    stem1_ = add_module("stem1", std::make_unique<ConvBnAct>(3, 64, 3, 2, 1, rng));
    stem2_ = add_module("stem2", std::make_unique<ConvBnAct>(64, 64, 3, 2, 1, rng));

    auto layer1 = std::make_unique<Sequential>();
    int64_t in_ch = 64;
    for (int b = 0; b < 4; ++b) {
      layer1->push(std::make_unique<Bottleneck>(in_ch, 64, 1, rng));
      in_ch = 256;
    }
    layer1_ = add_module("layer1", std::move(layer1));

    transition1_hi_ = add_module("transition1_hi",
                                 std::make_unique<ConvBnAct>(256, kWidths[0], 3, 1, 1, rng));
    transition1_lo_ = add_module("transition1_lo",
                                 std::make_unique<ConvBnAct>(256, kWidths[1], 3, 2, 1, rng));
    transition2_ = add_module(
        "transition2", std::make_unique<ConvBnAct>(kWidths[1], kWidths[2], 3, 2, 1, rng));
    transition3_ = add_module(
        "transition3", std::make_unique<ConvBnAct>(kWidths[2], kWidths[3], 3, 2, 1, rng));

    auto add_stage = [&](const char* name, int branches, int modules) {
      std::vector<HrnetModule*> stage;
      const std::vector<int64_t> widths(kWidths.begin(), kWidths.begin() + branches);
      for (int m = 0; m < modules; ++m)
        stage.push_back(add_module(std::string(name) + "." + std::to_string(m),
                                   std::make_unique<HrnetModule>(widths, rng)));
      return stage;
    };
    stage2_ = add_stage("stage2", 2, 1);
    stage3_ = add_stage("stage3", 3, 4);
    stage4_ = add_stage("stage4", 4, 3);

    // incremental head: raise each branch with a bottleneck, then cascade
    // stride-2 merges down to the coarsest resolution
    const std::array<int64_t, 4> head_mids = {32, 64, 128, 256};
    for (int i = 0; i < 4; ++i)
      incre_[i] = add_module("incre" + std::to_string(i),
                             std::make_unique<Bottleneck>(kWidths[i], head_mids[i], 1, rng));
    for (int i = 0; i < 3; ++i)
      downsamp_[i] =
          add_module("downsamp" + std::to_string(i),
                     std::make_unique<ConvBnAct>(head_mids[i] * 4, head_mids[i + 1] * 4, 3, 2,
                                                 1, rng));
    final_ = add_module("final", std::make_unique<ConvBnAct>(1024, feature_dim_, 1, 1, 0, rng));
  }

  Var forward(const Var& images) override {
    Var x = layer1_->forward(stem2_->forward(stem1_->forward(images)));

    std::vector<Var> branches = {transition1_hi_->forward(x), transition1_lo_->forward(x)};
    for (auto* m : stage2_) branches = m->forward(branches);

    branches.push_back(transition2_->forward(branches.back()));
    for (auto* m : stage3_) branches = m->forward(branches);

    branches.push_back(transition3_->forward(branches.back()));
    for (auto* m : stage4_) branches = m->forward(branches);

    Var y = incre_[0]->forward(branches[0]);
    for (int i = 1; i < 4; ++i)
      y = ops::add(incre_[i]->forward(branches[i]), downsamp_[i - 1]->forward(y));
    return ops::global_avg_pool(final_->forward(y));
  }

  int64_t feature_dim() const override { return feature_dim_; }

 private:
  static constexpr std::array<int64_t, 4> kWidths = {32, 64, 128, 256};

  int64_t feature_dim_;
  ConvBnAct *stem1_, *stem2_;
  Sequential* layer1_;
  ConvBnAct *transition1_hi_, *transition1_lo_, *transition2_, *transition3_;
  std::vector<HrnetModule*> stage2_, stage3_, stage4_;
  std::array<Bottleneck*, 4> incre_{};
  std::array<ConvBnAct*, 3> downsamp_{};
  ConvBnAct* final_;
};

inline std::unique_ptr<Backbone> make_hrnet_w32(int64_t feature_dim, Rng& rng) {
  return std::make_unique<HrnetW32Backbone>(feature_dim, rng);
}

}  // namespace artgest::nn
