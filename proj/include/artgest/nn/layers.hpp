#pragma once

#include <cmath>
#include <memory>

#include "artgest/core/conv_ops.hpp"
#include "artgest/core/ops.hpp"
#include "artgest/nn/module.hpp"

namespace artgest::nn {

inline Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  return Tensor::rand_uniform(std::move(shape), rng, -bound, bound);
}

class Conv2d : public Layer {
 public:
  Conv2d(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad, Rng& rng,
         bool with_bias = true)
      : stride_(stride), pad_(pad) {
    weight_ = add_parameter(
        "weight", kaiming_uniform({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng));
    if (with_bias) bias_ = add_parameter("bias", Tensor::zeros({out_ch}));
  }

  Var forward(const Var& x) override { return ops::conv2d(x, weight_, bias_, stride_, pad_); }

 private:
  Var weight_, bias_;
  int64_t stride_, pad_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int64_t channels) {
    gamma_ = add_parameter("weight", Tensor::ones({channels}));
    beta_ = add_parameter("bias", Tensor::zeros({channels}));
    running_mean_ = add_buffer("running_mean", Tensor::zeros({channels}));
    running_var_ = add_buffer("running_var", Tensor::ones({channels}));
  }

  Var forward(const Var& x) override {
    return ops::batchnorm2d(x, gamma_, beta_, running_mean_, running_var_, is_training());
  }

 private:
  Var gamma_, beta_;
  Tensor running_mean_, running_var_;
};

class Linear : public Layer {
 public:
  Linear(int64_t in_dim, int64_t out_dim, Rng& rng) : in_dim_(in_dim), out_dim_(out_dim) {
    weight_ = add_parameter("weight", kaiming_uniform({in_dim, out_dim}, in_dim, rng));
    bias_ = add_parameter("bias", Tensor::zeros({out_dim}));
  }

  /// Accepts [N, in] or [..., in]; higher-rank inputs are flattened to rows
  /// and restored afterwards.
  Var forward(const Var& x) override {
    const auto& s = x->value.shape();
    if (s.size() == 2) return ops::add_bias(ops::matmul(x, weight_), bias_);
    Shape out_shape = s;
    out_shape.back() = out_dim_;
    Var flat = ops::reshape(x, {x->value.numel() / in_dim_, in_dim_});
    return ops::reshape(ops::add_bias(ops::matmul(flat, weight_), bias_), out_shape);
  }

  /// Zeroes all parameters (used by tests exercising closed-form cases).
  void zero_init() {
    weight_->value.fill(0.0f);
    bias_->value.fill(0.0f);
  }

 private:
  Var weight_, bias_;
  int64_t in_dim_, out_dim_;
};

class LayerNorm : public Layer {
 public:
  explicit LayerNorm(int64_t width) {
    gamma_ = add_parameter("weight", Tensor::ones({width}));
    beta_ = add_parameter("bias", Tensor::zeros({width}));
  }

  Var forward(const Var& x) override { return ops::layernorm_lastdim(x, gamma_, beta_); }

 private:
  Var gamma_, beta_;
};

class ReLU : public Layer {
 public:
  Var forward(const Var& x) override { return ops::relu(x); }
};

class GELU : public Layer {
 public:
  Var forward(const Var& x) override { return ops::gelu(x); }
};

/// Conv + BN + optional ReLU, the standard backbone building unit.
class ConvBnAct : public Layer {
 public:
  ConvBnAct(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad, Rng& rng,
            bool act = true)
      : act_(act) {
    conv_ = add_module("conv", std::make_unique<Conv2d>(in_ch, out_ch, kernel, stride, pad, rng,
                                                        /*with_bias=*/false));
    bn_ = add_module("bn", std::make_unique<BatchNorm2d>(out_ch));
  }

  Var forward(const Var& x) override {
    Var v = bn_->forward(conv_->forward(x));
    return act_ ? ops::relu(v) : v;
  }

 private:
  Conv2d* conv_;
  BatchNorm2d* bn_;
  bool act_;
};

}  // namespace artgest::nn
