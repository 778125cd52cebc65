#pragma once

#include <cmath>

#include "artgest/nn/backbone.hpp"

namespace artgest::nn {

/// Window multi-head self-attention with cosine similarity, a learned
/// per-head temperature, and a continuous relative-position-bias MLP over
/// log-spaced coordinates. Parameters are independent of the window size;
/// the coordinate tables are built per call from the effective window.
class WindowAttention : public Layer {
 public:
  WindowAttention(int64_t dim, int64_t heads, Rng& rng) : dim_(dim), heads_(heads) {
    qkv_ = add_module("qkv", std::make_unique<Linear>(dim, 3 * dim, rng));
    proj_ = add_module("proj", std::make_unique<Linear>(dim, dim, rng));
    cpb_fc1_ = add_module("cpb_fc1", std::make_unique<Linear>(2, 128, rng));
    cpb_fc2_ = add_module("cpb_fc2", std::make_unique<Linear>(128, heads, rng));
    logit_scale_ = add_parameter("logit_scale", Tensor::full({heads}, std::log(10.0f)));
  }

  Var forward(const Var& x) override {
    const int64_t w = static_cast<int64_t>(std::lround(std::sqrt(double(x->value.dim(1)))));
    return forward_masked(x, w, nullptr, 0);
  }

  /// x: [B, T, C], T = window^2. mask (optional): [num_windows, T, T],
  /// replicated over batch and heads.
  Var forward_masked(const Var& x, int64_t window, const Tensor* mask, int64_t num_windows) {
    const int64_t b = x->value.dim(0), t = x->value.dim(1);
    require(t == window * window, ErrorCode::ShapeMismatch, "window token count");
    const int64_t hd = dim_ / heads_;

    Var qkv = qkv_->forward(x);  // [B,T,3C]
    auto split_heads = [&](const Var& v) {
      Var r = ops::reshape(v, {b, t, heads_, hd});
      r = ops::permute(r, {0, 2, 1, 3});
      return ops::reshape(r, {b * heads_, t, hd});
    };
    Var q = split_heads(ops::slice_lastdim(qkv, 0, dim_));
    Var k = split_heads(ops::slice_lastdim(qkv, dim_, dim_));
    Var v = split_heads(ops::slice_lastdim(qkv, 2 * dim_, dim_));

    // cosine attention with clamped learned temperature
    q = ops::l2_normalize_lastdim(q);
    k = ops::l2_normalize_lastdim(k);
    Var attn = ops::batched_matmul(q, ops::permute(k, {0, 2, 1}));  // [B*H, T, T]
    Var scale = ops::exp_clamp_max(logit_scale_, std::log(100.0f));
    attn = ops::scale_groups(ops::reshape(attn, {b, heads_, t * t}), scale);

    // continuous relative position bias, shared across the batch
    Var table = cpb_fc2_->forward(ops::relu(cpb_fc1_->forward(coord_table(window))));
    Var bias = ops::mul_scalar(ops::sigmoid(table), 16.0f);     // [(2w-1)^2, H]
    bias = ops::gather_rows(bias, pair_index(window));          // [T*T, H]
    bias = ops::permute(bias, {1, 0});                          // [H, T*T]
    attn = ops::add_group_bias(attn, ops::reshape(bias, {heads_, t, t}));

    if (mask) {
      require(num_windows > 0 && b % num_windows == 0, ErrorCode::ShapeMismatch, "mask windows");
      Tensor expanded({num_windows, heads_ * t * t});
      for (int64_t wi = 0; wi < num_windows; ++wi)
        for (int64_t h = 0; h < heads_; ++h)
          std::copy_n(mask->data() + wi * t * t, t * t,
                      expanded.data() + (wi * heads_ + h) * t * t);
      Var grouped = ops::reshape(attn, {b / num_windows, num_windows, heads_ * t * t});
      attn = ops::add_group_bias(grouped, make_leaf(expanded));
    }

    attn = ops::softmax_lastdim(ops::reshape(attn, {b * heads_, t, t}));
    Var out = ops::batched_matmul(attn, v);  // [B*H, T, hd]
    out = ops::reshape(out, {b, heads_, t, hd});
    out = ops::permute(out, {0, 2, 1, 3});
    out = ops::reshape(out, {b, t, dim_});
    return proj_->forward(out);
  }

 private:
  /// Log-spaced normalized relative coordinates, [(2w-1)^2, 2].
  static Var coord_table(int64_t w) {
    const int64_t span = 2 * w - 1;
    Tensor coords({span * span, 2});
    for (int64_t dy = -(w - 1); dy <= w - 1; ++dy)
      for (int64_t dx = -(w - 1); dx <= w - 1; ++dx) {
        const int64_t row = (dy + w - 1) * span + (dx + w - 1);
        auto scaled = [&](int64_t d) {
          if (w == 1) return 0.0f;
          const float v = 8.0f * static_cast<float>(d) / static_cast<float>(w - 1);
          return std::copysign(std::log2(1.0f + std::abs(v)) / std::log2(8.0f), v);
        };
        coords.data()[row * 2 + 0] = scaled(dy);
        coords.data()[row * 2 + 1] = scaled(dx);
      }
    return make_leaf(coords);
  }

  /// token-pair -> coordinate-table row, length w^4.
  static std::vector<int64_t> pair_index(int64_t w) {
    const int64_t span = 2 * w - 1;
    std::vector<int64_t> idx(w * w * w * w);
    for (int64_t i = 0; i < w * w; ++i)
      for (int64_t j = 0; j < w * w; ++j) {
        const int64_t dy = i / w - j / w + w - 1;
        const int64_t dx = i % w - j % w + w - 1;
        idx[i * w * w + j] = dy * span + dx;
      }
    return idx;
  }

  int64_t dim_, heads_;
  Linear *qkv_, *proj_, *cpb_fc1_, *cpb_fc2_;
  Var logit_scale_;
};

/// Transformer block with res-post-norm and (optionally shifted) windows.
/// Token layout through the block is [N, H, W, C]. The effective window is
/// min(window, grid); shifting is skipped when the window covers the grid.
class SwinBlock : public Module {
 public:
  SwinBlock(int64_t dim, int64_t window, int64_t heads, bool shifted, Rng& rng)
      : dim_(dim), window_(window), shifted_(shifted) {
    attn_ = add_module("attn", std::make_unique<WindowAttention>(dim, heads, rng));
    norm1_ = add_module("norm1", std::make_unique<LayerNorm>(dim));
    fc1_ = add_module("fc1", std::make_unique<Linear>(dim, 4 * dim, rng));
    fc2_ = add_module("fc2", std::make_unique<Linear>(4 * dim, dim, rng));
    norm2_ = add_module("norm2", std::make_unique<LayerNorm>(dim));
  }

  Var forward(const Var& x) {
    const int64_t n = x->value.dim(0), grid = x->value.dim(1);
    require(x->value.dim(2) == grid, ErrorCode::ShapeMismatch, "swin expects a square grid");
    const int64_t w = std::min(window_, grid);
    require(grid % w == 0, ErrorCode::ShapeMismatch,
            "grid " + std::to_string(grid) + " not divisible by window " + std::to_string(w));
    const int64_t shift = shifted_ && w < grid ? w / 2 : 0;

    Var shifted_x = shift > 0 ? ops::roll_hw(x, -shift, -shift) : x;
    Var windows = partition(shifted_x, n, grid, w);
    Var attended;
    if (shift > 0) {
      const Tensor mask = shift_mask(grid, w, shift);
      attended = attn_->forward_masked(windows, w, &mask, (grid / w) * (grid / w));
    } else {
      attended = attn_->forward_masked(windows, w, nullptr, 0);
    }
    Var merged = reverse(attended, n, grid, w);
    if (shift > 0) merged = ops::roll_hw(merged, shift, shift);
    Var h = ops::add(x, norm1_->forward(merged));

    Var m = fc2_->forward(ops::gelu(fc1_->forward(h)));
    return ops::add(h, norm2_->forward(m));
  }

 private:
  Var partition(const Var& x, int64_t n, int64_t grid, int64_t w) const {
    const int64_t nw = grid / w;
    Var r = ops::reshape(x, {n, nw, w, nw, w, dim_});
    r = ops::permute(r, {0, 1, 3, 2, 4, 5});
    return ops::reshape(r, {n * nw * nw, w * w, dim_});
  }

  Var reverse(const Var& x, int64_t n, int64_t grid, int64_t w) const {
    const int64_t nw = grid / w;
    Var r = ops::reshape(x, {n, nw, nw, w, w, dim_});
    r = ops::permute(r, {0, 1, 3, 2, 4, 5});
    return ops::reshape(r, {n, grid, grid, dim_});
  }

  /// Blocks attention across the wrap-around seams of the cyclic shift.
  static Tensor shift_mask(int64_t grid, int64_t w, int64_t shift) {
    std::vector<int> region(grid * grid);
    int id = 0;
    const std::vector<std::pair<int64_t, int64_t>> spans = {
        {0, grid - w}, {grid - w, grid - shift}, {grid - shift, grid}};
    for (auto [y0, y1] : spans)
      for (auto [x0, x1] : spans) {
        for (int64_t y = y0; y < y1; ++y)
          for (int64_t x = x0; x < x1; ++x) region[y * grid + x] = id;
        ++id;
      }

    const int64_t nw = grid / w, t = w * w;
    Tensor mask({nw * nw, t, t});
    for (int64_t wy = 0; wy < nw; ++wy)
      for (int64_t wx = 0; wx < nw; ++wx) {
        const int64_t win = wy * nw + wx;
        for (int64_t i = 0; i < t; ++i)
          for (int64_t j = 0; j < t; ++j) {
            const int64_t yi = wy * w + i / w, xi = wx * w + i % w;
            const int64_t yj = wy * w + j / w, xj = wx * w + j % w;
            mask.data()[(win * t + i) * t + j] =
                region[yi * grid + xi] == region[yj * grid + xj] ? 0.0f : -100.0f;
          }
      }
    return mask;
  }

  int64_t dim_, window_;
  bool shifted_;
  WindowAttention* attn_;
  LayerNorm *norm1_, *norm2_;
  Linear *fc1_, *fc2_;
};

/// 2x2 neighborhood concat + linear reduction, [N,H,W,C] -> [N,H/2,W/2,2C].
class PatchMerging : public Module {
 public:
  PatchMerging(int64_t dim, Rng& rng) : dim_(dim) {
    reduce_ = add_module("reduce", std::make_unique<Linear>(4 * dim, 2 * dim, rng));
    norm_ = add_module("norm", std::make_unique<LayerNorm>(2 * dim));
  }

  Var forward(const Var& x) {
    const int64_t n = x->value.dim(0), g = x->value.dim(1);
    require(g % 2 == 0, ErrorCode::ShapeMismatch, "patch merging needs an even grid");
    Var r = ops::reshape(x, {n, g / 2, 2, g / 2, 2, dim_});
    r = ops::permute(r, {0, 1, 3, 2, 4, 5});
    r = ops::reshape(r, {n, g / 2, g / 2, 4 * dim_});
    return norm_->forward(reduce_->forward(r));
  }

 private:
  int64_t dim_;
  Linear* reduce_;
  LayerNorm* norm_;
};

/// SwinV2-tiny configuration: patch 4, dims 96/192/384/768, depths 2/2/6/2,
/// heads 3/6/12/24, window 8. Square inputs whose stage grids divide by the
/// effective window work; powers of two >= 32 and multiples of 256 qualify.
class SwinV2Backbone : public Backbone {
 public:
  SwinV2Backbone(int64_t feature_dim, Rng& rng) : feature_dim_(feature_dim) {
    patch_embed_ = add_module("patch_embed", std::make_unique<Conv2d>(3, kDims[0], 4, 4, 0, rng));
    patch_norm_ = add_module("patch_norm", std::make_unique<LayerNorm>(kDims[0]));
    for (int s = 0; s < 4; ++s) {
      std::vector<SwinBlock*> blocks;
      for (int b = 0; b < kDepths[s]; ++b)
        blocks.push_back(add_module(
            "stage" + std::to_string(s) + ".block" + std::to_string(b),
            std::make_unique<SwinBlock>(kDims[s], kWindow, kHeads[s], b % 2 == 1, rng)));
      stages_.push_back(std::move(blocks));
      merges_.push_back(s < 3 ? add_module("merge" + std::to_string(s),
                                           std::make_unique<PatchMerging>(kDims[s], rng))
                              : nullptr);
    }
    final_norm_ = add_module("final_norm", std::make_unique<LayerNorm>(kDims[3]));
    if (feature_dim_ != kDims[3])
      proj_ = add_module("proj", std::make_unique<Linear>(kDims[3], feature_dim_, rng));
  }

  Var forward(const Var& images) override {
    require(images->value.dim(2) == images->value.dim(3), ErrorCode::ShapeMismatch,
            "swin expects square input");
    Var x = patch_embed_->forward(images);  // [N,C,G,G]
    x = ops::permute(x, {0, 2, 3, 1});      // [N,G,G,C]
    x = patch_norm_->forward(x);
    for (size_t s = 0; s < stages_.size(); ++s) {
      for (auto* block : stages_[s]) x = block->forward(x);
      if (merges_[s]) x = merges_[s]->forward(x);
    }
    const int64_t n = x->value.dim(0), tokens = x->value.dim(1) * x->value.dim(2);
    x = final_norm_->forward(ops::reshape(x, {n, tokens, kDims[3]}));
    Var pooled = ops::mean_middle(x);
    return proj_ ? proj_->forward(pooled) : pooled;
  }

  int64_t feature_dim() const override { return feature_dim_; }

 private:
  static constexpr std::array<int64_t, 4> kDims = {96, 192, 384, 768};
  static constexpr std::array<int, 4> kDepths = {2, 2, 6, 2};
  static constexpr std::array<int64_t, 4> kHeads = {3, 6, 12, 24};
  static constexpr int64_t kWindow = 8;

  int64_t feature_dim_;
  Conv2d* patch_embed_;
  LayerNorm* patch_norm_;
  std::vector<std::vector<SwinBlock*>> stages_;
  std::vector<PatchMerging*> merges_;
  LayerNorm* final_norm_;
  Linear* proj_ = nullptr;
};

inline std::unique_ptr<Backbone> make_swin_v2(int64_t feature_dim, Rng& rng) {
  return std::make_unique<SwinV2Backbone>(feature_dim, rng);
}

}  // namespace artgest::nn
