#pragma once

#include <vector>

#include "artgest/core/ops.hpp"

namespace artgest::ops {

namespace detail {

/// Unfolds one sample [C,H,W] into [C*KH*KW, OH*OW] with zero padding.
inline void im2col(const float* x, int64_t C, int64_t H, int64_t W, int64_t KH, int64_t KW,
                   int64_t stride, int64_t pad, int64_t OH, int64_t OW, float* col) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t kh = 0; kh < KH; ++kh)
      for (int64_t kw = 0; kw < KW; ++kw) {
        float* dst = col + ((c * KH + kh) * KW + kw) * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
          const int64_t ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) {
            std::fill_n(dst + oh * OW, OW, 0.0f);
            continue;
          }
          const float* src = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < OW; ++ow) {
            const int64_t iw = ow * stride - pad + kw;
            dst[oh * OW + ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0f;
          }
        }
      }
}

/// Transpose of im2col: accumulates columns back into the image.
inline void col2im_add(const float* col, int64_t C, int64_t H, int64_t W, int64_t KH, int64_t KW,
                       int64_t stride, int64_t pad, int64_t OH, int64_t OW, float* x) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t kh = 0; kh < KH; ++kh)
      for (int64_t kw = 0; kw < KW; ++kw) {
        const float* src = col + ((c * KH + kh) * KW + kw) * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
          const int64_t ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          float* dst = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < OW; ++ow) {
            const int64_t iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) dst[iw] += src[oh * OW + ow];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution, NCHW, square stride/padding. Weight layout [OC,IC,KH,KW].
/// Bias may be a null Var. im2col buffers are recomputed in the backward pass
/// instead of cached, keeping tape memory proportional to activations.
inline Var conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride, int64_t pad) {
  require(x->value.ndim() == 4 && w->value.ndim() == 4, ErrorCode::ShapeMismatch, "conv2d rank");
  const int64_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
                W = x->value.dim(3);
  const int64_t OC = w->value.dim(0), KH = w->value.dim(2), KW = w->value.dim(3);
  require(w->value.dim(1) == C, ErrorCode::ShapeMismatch,
          "conv2d channels: input " + std::to_string(C) + " vs weight " +
              std::to_string(w->value.dim(1)));
  const int64_t OH = (H + 2 * pad - KH) / stride + 1;
  const int64_t OW = (W + 2 * pad - KW) / stride + 1;
  require(OH > 0 && OW > 0, ErrorCode::ShapeMismatch, "conv2d: output would be empty");

  const int64_t K = C * KH * KW;
  Tensor out({N, OC, OH, OW});
  Tensor col({K, OH * OW});
  CMapMat wmat(w->value.data(), OC, K);
  for (int64_t n = 0; n < N; ++n) {
    detail::im2col(x->value.data() + n * C * H * W, C, H, W, KH, KW, stride, pad, OH, OW,
                   col.data());
    MapMat(out.data() + n * OC * OH * OW, OC, OH * OW).noalias() =
        wmat * CMapMat(col.data(), K, OH * OW);
  }
  if (bias) {
    require(bias->value.numel() == OC, ErrorCode::ShapeMismatch, "conv2d bias width");
    for (int64_t n = 0; n < N; ++n)
      for (int64_t oc = 0; oc < OC; ++oc) {
        float* dst = out.data() + (n * OC + oc) * OH * OW;
        const float b = bias->value[oc];
        for (int64_t i = 0; i < OH * OW; ++i) dst[i] += b;
      }
  }

  std::vector<Var> parents = bias ? std::vector<Var>{x, w, bias} : std::vector<Var>{x, w};
  return make_result(
      std::move(out), parents, [x, w, bias, N, C, H, W, OC, KH, KW, stride, pad, OH, OW, K](Node& node) {
        Tensor col({K, OH * OW});
        Tensor dcol({K, OH * OW});
        CMapMat wmat(w->value.data(), OC, K);
        if (w->requires_grad) w->ensure_grad();
        if (x->requires_grad) x->ensure_grad();
        for (int64_t n = 0; n < N; ++n) {
          CMapMat g(node.grad.data() + n * OC * OH * OW, OC, OH * OW);
          if (w->requires_grad) {
            detail::im2col(x->value.data() + n * C * H * W, C, H, W, KH, KW, stride, pad, OH,
                           OW, col.data());
            MapMat(w->grad.data(), OC, K).noalias() +=
                g * CMapMat(col.data(), K, OH * OW).transpose();
          }
          if (x->requires_grad) {
            MapMat(dcol.data(), K, OH * OW).noalias() = wmat.transpose() * g;
            detail::col2im_add(dcol.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                               x->grad.data() + n * C * H * W);
          }
        }
        if (bias && bias->requires_grad) {
          bias->ensure_grad();
          for (int64_t n = 0; n < N; ++n)
            for (int64_t oc = 0; oc < OC; ++oc) {
              const float* g = node.grad.data() + (n * OC + oc) * OH * OW;
              double s = 0.0;
              for (int64_t i = 0; i < OH * OW; ++i) s += g[i];
              bias->grad[oc] += static_cast<float>(s);
            }
        }
      });
}

inline Var maxpool2d(const Var& x, int64_t kernel, int64_t stride, int64_t pad) {
  const int64_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
                W = x->value.dim(3);
  const int64_t OH = (H + 2 * pad - kernel) / stride + 1;
  const int64_t OW = (W + 2 * pad - kernel) / stride + 1;
  Tensor out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<int64_t>>(N * C * OH * OW);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const float* src = x->value.data() + (n * C + c) * H * W;
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_ix = -1;
          for (int64_t kh = 0; kh < kernel; ++kh) {
            const int64_t ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            for (int64_t kw = 0; kw < kernel; ++kw) {
              const int64_t iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              const float v = src[ih * W + iw];
              if (v > best) {
                best = v;
                best_ix = ih * W + iw;
              }
            }
          }
          const int64_t o = ((n * C + c) * OH + oh) * OW + ow;
          out.data()[o] = best;
          (*argmax)[o] = (n * C + c) * H * W + best_ix;
        }
    }
  return make_result(std::move(out), {x}, [x, argmax](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t i = 0, m = n.grad.numel(); i < m; ++i)
      x->grad.data()[(*argmax)[i]] += n.grad.data()[i];
  });
}

inline Var global_avg_pool(const Var& x) {
  require(x->value.ndim() == 4, ErrorCode::ShapeMismatch, "gap rank");
  const int64_t N = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  Tensor out({N, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const float* src = x->value.data() + (n * C + c) * HW;
      double s = 0.0;
      for (int64_t i = 0; i < HW; ++i) s += src[i];
      out.data()[n * C + c] = static_cast<float>(s / HW);
    }
  return make_result(std::move(out), {x}, [x, N, C, HW](Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float inv = 1.0f / static_cast<float>(HW);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const float g = node.grad.data()[n * C + c] * inv;
        float* dst = x->grad.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) dst[i] += g;
      }
  });
}

inline Var nearest_upsample2d(const Var& x, int64_t scale) {
  const int64_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
                W = x->value.dim(3);
  Tensor out({N, C, H * scale, W * scale});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* src = x->value.data() + nc * H * W;
    float* dst = out.data() + nc * H * W * scale * scale;
    for (int64_t i = 0; i < H * scale; ++i)
      for (int64_t j = 0; j < W * scale; ++j)
        dst[i * W * scale + j] = src[(i / scale) * W + j / scale];
  }
  return make_result(std::move(out), {x}, [x, N, C, H, W, scale](Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const float* g = node.grad.data() + nc * H * W * scale * scale;
      float* dst = x->grad.data() + nc * H * W;
      for (int64_t i = 0; i < H * scale; ++i)
        for (int64_t j = 0; j < W * scale; ++j)
          dst[(i / scale) * W + j / scale] += g[i * W * scale + j];
    }
  });
}

/// BatchNorm over N,H,W per channel. Training mode normalizes with batch
/// statistics and updates the (shared-storage) running tensors in place;
/// eval mode normalizes with the running statistics.
inline Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, Tensor running_mean,
                       Tensor running_var, bool training, float momentum = 0.1f,
                       float eps = 1e-5f) {
  require(x->value.ndim() == 4, ErrorCode::ShapeMismatch, "bn rank");
  const int64_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
                W = x->value.dim(3);
  const int64_t M = N * H * W;
  require(gamma->value.numel() == C && beta->value.numel() == C, ErrorCode::ShapeMismatch,
          "bn affine width");

  Tensor xhat(x->value.shape());
  Tensor inv_std({C});
  Tensor out(x->value.shape());

  auto normalize = [&](const float* mean, const float* var) {
    for (int64_t c = 0; c < C; ++c)
      inv_std[c] = 1.0f / std::sqrt(var[c] + eps);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const float* src = x->value.data() + (n * C + c) * H * W;
        float* xh = xhat.data() + (n * C + c) * H * W;
        float* o = out.data() + (n * C + c) * H * W;
        const float mu = mean[c], istd = inv_std[c], g = gamma->value[c], b = beta->value[c];
        for (int64_t i = 0; i < H * W; ++i) {
          xh[i] = (src[i] - mu) * istd;
          o[i] = xh[i] * g + b;
        }
      }
  };

  if (training) {
    Tensor mean({C}), var({C});
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const float* src = x->value.data() + (n * C + c) * H * W;
        for (int64_t i = 0; i < H * W; ++i) s += src[i];
      }
      mean[c] = static_cast<float>(s / M);
      double v = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const float* src = x->value.data() + (n * C + c) * H * W;
        for (int64_t i = 0; i < H * W; ++i) {
          const double d = src[i] - mean[c];
          v += d * d;
        }
      }
      var[c] = static_cast<float>(v / M);
    }
    normalize(mean.data(), var.data());
    // running stats carry the unbiased variance
    const float unbias = M > 1 ? static_cast<float>(M) / (M - 1) : 1.0f;
    for (int64_t c = 0; c < C; ++c) {
      running_mean[c] = (1.0f - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (1.0f - momentum) * running_var[c] + momentum * var[c] * unbias;
    }
    return make_result(std::move(out), {x, gamma, beta},
                       [x, gamma, beta, xhat, inv_std, N, C, H, W, M](Node& node) {
                         const float* g = node.grad.data();
                         if (gamma->requires_grad) {
                           gamma->ensure_grad();
                           beta->ensure_grad();
                         }
                         if (x->requires_grad) x->ensure_grad();
                         for (int64_t c = 0; c < C; ++c) {
                           double sum_g = 0.0, sum_g_xhat = 0.0;
                           for (int64_t n = 0; n < N; ++n) {
                             const int64_t base = (n * C + c) * H * W;
                             for (int64_t i = 0; i < H * W; ++i) {
                               sum_g += g[base + i];
                               sum_g_xhat += static_cast<double>(g[base + i]) * xhat[base + i];
                             }
                           }
                           if (gamma->requires_grad) {
                             gamma->grad[c] += static_cast<float>(sum_g_xhat);
                             beta->grad[c] += static_cast<float>(sum_g);
                           }
                           if (x->requires_grad) {
                             const float gam = gamma->value[c], istd = inv_std[c];
                             const float k1 = static_cast<float>(sum_g / M);
                             const float k2 = static_cast<float>(sum_g_xhat / M);
                             for (int64_t n = 0; n < N; ++n) {
                               const int64_t base = (n * C + c) * H * W;
                               for (int64_t i = 0; i < H * W; ++i)
                                 x->grad.data()[base + i] +=
                                     gam * istd * (g[base + i] - k1 - xhat[base + i] * k2);
                             }
                           }
                         }
                       });
  }

  normalize(running_mean.data(), running_var.data());
  return make_result(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, N, C, H, W](Node& node) {
                       const float* g = node.grad.data();
                       if (gamma->requires_grad) {
                         gamma->ensure_grad();
                         beta->ensure_grad();
                         for (int64_t n = 0; n < N; ++n)
                           for (int64_t c = 0; c < C; ++c) {
                             const int64_t base = (n * C + c) * H * W;
                             for (int64_t i = 0; i < H * W; ++i) {
                               gamma->grad[c] += g[base + i] * xhat[base + i];
                               beta->grad[c] += g[base + i];
                             }
                           }
                       }
                       if (!x->requires_grad) return;
                       x->ensure_grad();
                       for (int64_t n = 0; n < N; ++n)
                         for (int64_t c = 0; c < C; ++c) {
                           const float k = gamma->value[c] * inv_std[c];
                           const int64_t base = (n * C + c) * H * W;
                           for (int64_t i = 0; i < H * W; ++i)
                             x->grad.data()[base + i] += g[base + i] * k;
                         }
                     });
}

/// Inverted dropout. Identity when not training or p == 0.
inline Var dropout(const Var& x, float p, bool training, Rng& rng) {
  if (!training || p <= 0.0f) return x;
  require(p < 1.0f, ErrorCode::InvalidArgument, "dropout p must be < 1");
  const float keep = 1.0f - p;
  Tensor mask(x->value.shape());
  for (auto& v : mask) v = rng.bernoulli(keep) ? 1.0f / keep : 0.0f;
  Tensor out = x->value.clone();
  for (int64_t i = 0, m = out.numel(); i < m; ++i) out.data()[i] *= mask[i];
  return make_result(std::move(out), {x}, [x, mask](Node& n) {
    if (!x->requires_grad) return;
    Tensor d = n.grad.clone();
    for (int64_t i = 0, m = d.numel(); i < m; ++i) d.data()[i] *= mask[i];
    accumulate(x, d);
  });
}

}  // namespace artgest::ops
