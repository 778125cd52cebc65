#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "artgest/core/autodiff.hpp"

namespace artgest::ops {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline CMapMat as_matrix(const Tensor& t, int64_t rows, int64_t cols) {
  return CMapMat(t.data(), rows, cols);
}
inline MapMat as_matrix(Tensor& t, int64_t rows, int64_t cols) {
  return MapMat(t.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// arithmetic

inline Var add(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorCode::ShapeMismatch,
          "add: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  Tensor out = a->value.clone();
  out.add_(b->value);
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    accumulate(a, n.grad);
    accumulate(b, n.grad);
  });
}

inline Var add_n(const std::vector<Var>& xs) {
  require(!xs.empty(), ErrorCode::InvalidArgument, "add_n: empty");
  Tensor out = xs[0]->value.clone();
  for (size_t i = 1; i < xs.size(); ++i) out.add_(xs[i]->value);
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_result(std::move(out), parents, [xs](Node& n) {
    for (const auto& x : xs) accumulate(x, n.grad);
  });
}

inline Var mul_elem(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorCode::ShapeMismatch, "mul_elem shapes");
  Tensor out = a->value.clone();
  for (int64_t i = 0, m = out.numel(); i < m; ++i) out.data()[i] *= b->value.data()[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor d = n.grad.clone();
      for (int64_t i = 0, m = d.numel(); i < m; ++i) d.data()[i] *= b->value.data()[i];
      accumulate(a, d);
    }
    if (b->requires_grad) {
      Tensor d = n.grad.clone();
      for (int64_t i = 0, m = d.numel(); i < m; ++i) d.data()[i] *= a->value.data()[i];
      accumulate(b, d);
    }
  });
}

inline Var sum_all(const Var& x) {
  Tensor out({1});
  out[0] = static_cast<float>(x->value.sum());
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float g = n.grad[0];
    for (int64_t i = 0, m = x->grad.numel(); i < m; ++i) x->grad.data()[i] += g;
  });
}

inline Var mul_scalar(const Var& x, float s) {
  Tensor out = x->value.clone();
  out.scale_(s);
  return make_result(std::move(out), {x}, [x, s](Node& n) {
    Tensor d = n.grad.clone();
    d.scale_(s);
    accumulate(x, d);
  });
}

/// x: [N, M] plus row-broadcast bias b: [M].
inline Var add_bias(const Var& x, const Var& b) {
  const int64_t m = b->value.numel();
  require(x->value.numel() % m == 0, ErrorCode::ShapeMismatch, "add_bias width");
  const int64_t rows = x->value.numel() / m;
  Tensor out = x->value.clone();
  float* o = out.data();
  const float* bv = b->value.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < m; ++c) o[r * m + c] += bv[c];
  return make_result(std::move(out), {x, b}, [x, b, rows, m](Node& n) {
    accumulate(x, n.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      const float* g = n.grad.data();
      float* db = b->grad.data();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < m; ++c) db[c] += g[r * m + c];
    }
  });
}

// ---------------------------------------------------------------------------
// activations

inline Var relu(const Var& x) {
  Tensor out = x->value.clone();
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    Tensor d = n.grad.clone();
    const float* in = x->value.data();
    float* dv = d.data();
    for (int64_t i = 0, m = d.numel(); i < m; ++i)
      if (in[i] <= 0.0f) dv[i] = 0.0f;
    accumulate(x, d);
  });
}

inline Var gelu(const Var& x) {
  Tensor out = x->value.clone();
  for (auto& v : out) v = 0.5f * v * (1.0f + std::erf(v * 0.70710678f));
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    Tensor d = n.grad.clone();
    const float* in = x->value.data();
    float* dv = d.data();
    constexpr float kInvSqrt2Pi = 0.3989422804f;
    for (int64_t i = 0, m = d.numel(); i < m; ++i) {
      const float v = in[i];
      const float cdf = 0.5f * (1.0f + std::erf(v * 0.70710678f));
      const float pdf = kInvSqrt2Pi * std::exp(-0.5f * v * v);
      dv[i] *= cdf + v * pdf;
    }
    accumulate(x, d);
  });
}

inline Var sigmoid(const Var& x) {
  Tensor out = x->value.clone();
  for (auto& v : out) v = 1.0f / (1.0f + std::exp(-v));
  Tensor saved = out;  // shares storage; ops never mutate results
  return make_result(std::move(out), {x}, [x, saved](Node& n) {
    if (!x->requires_grad) return;
    Tensor d = n.grad.clone();
    const float* y = saved.data();
    float* dv = d.data();
    for (int64_t i = 0, m = d.numel(); i < m; ++i) dv[i] *= y[i] * (1.0f - y[i]);
    accumulate(x, d);
  });
}

/// y = exp(min(x, cap)); used for learned attention temperature.
inline Var exp_clamp_max(const Var& x, float cap) {
  Tensor out = x->value.clone();
  for (auto& v : out) v = std::exp(std::min(v, cap));
  Tensor saved = out;
  return make_result(std::move(out), {x, }, [x, saved, cap](Node& n) {
    if (!x->requires_grad) return;
    Tensor d = n.grad.clone();
    const float* in = x->value.data();
    const float* y = saved.data();
    float* dv = d.data();
    for (int64_t i = 0, m = d.numel(); i < m; ++i)
      dv[i] = in[i] < cap ? dv[i] * y[i] : 0.0f;
    accumulate(x, d);
  });
}

// ---------------------------------------------------------------------------
// linear algebra

/// x: [N, K] times w: [K, M] -> [N, M].
inline Var matmul(const Var& x, const Var& w) {
  require(x->value.ndim() == 2 && w->value.ndim() == 2, ErrorCode::ShapeMismatch, "matmul rank");
  const int64_t n = x->value.dim(0), k = x->value.dim(1), m = w->value.dim(1);
  require(w->value.dim(0) == k, ErrorCode::ShapeMismatch,
          "matmul inner: " + shape_str(x->value.shape()) + " x " + shape_str(w->value.shape()));
  Tensor out({n, m});
  as_matrix(out, n, m).noalias() = as_matrix(x->value, n, k) * as_matrix(w->value, k, m);
  return make_result(std::move(out), {x, w}, [x, w, n, k, m](Node& node) {
    CMapMat g(node.grad.data(), n, m);
    if (x->requires_grad) {
      x->ensure_grad();
      MapMat(x->grad.data(), n, k).noalias() += g * as_matrix(w->value, k, m).transpose();
    }
    if (w->requires_grad) {
      w->ensure_grad();
      MapMat(w->grad.data(), k, m).noalias() += as_matrix(x->value, n, k).transpose() * g;
    }
  });
}

/// a: [B, M, K] times b: [B, K, N] -> [B, M, N].
inline Var batched_matmul(const Var& a, const Var& b) {
  require(a->value.ndim() == 3 && b->value.ndim() == 3, ErrorCode::ShapeMismatch, "bmm rank");
  const int64_t bs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2),
                n = b->value.dim(2);
  require(b->value.dim(0) == bs && b->value.dim(1) == k, ErrorCode::ShapeMismatch, "bmm shapes");
  Tensor out({bs, m, n});
  for (int64_t i = 0; i < bs; ++i) {
    CMapMat am(a->value.data() + i * m * k, m, k);
    CMapMat bm(b->value.data() + i * k * n, k, n);
    MapMat(out.data() + i * m * n, m, n).noalias() = am * bm;
  }
  return make_result(std::move(out), {a, b}, [a, b, bs, m, k, n](Node& node) {
    for (int64_t i = 0; i < bs; ++i) {
      CMapMat g(node.grad.data() + i * m * n, m, n);
      if (a->requires_grad) {
        a->ensure_grad();
        CMapMat bm(b->value.data() + i * k * n, k, n);
        MapMat(a->grad.data() + i * m * k, m, k).noalias() += g * bm.transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        CMapMat am(a->value.data() + i * m * k, m, k);
        MapMat(b->grad.data() + i * k * n, k, n).noalias() += am.transpose() * g;
      }
    }
  });
}

/// Concatenation along the last axis of two tensors with equal leading dims.
inline Var concat_lastdim(const Var& a, const Var& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  require(sa.size() == sb.size() && sa.size() >= 1, ErrorCode::ShapeMismatch, "concat rank");
  for (size_t i = 0; i + 1 < sa.size(); ++i)
    require(sa[i] == sb[i], ErrorCode::ShapeMismatch, "concat leading dims");
  const int64_t wa = sa.back(), wb = sb.back();
  const int64_t rows = a->value.numel() / wa;
  Shape so = sa;
  so.back() = wa + wb;
  Tensor out(so);
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a->value.data() + r * wa, wa, out.data() + r * (wa + wb));
    std::copy_n(b->value.data() + r * wb, wb, out.data() + r * (wa + wb) + wa);
  }
  return make_result(std::move(out), {a, b}, [a, b, rows, wa, wb](Node& n) {
    const float* g = n.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < wa; ++c) a->grad.data()[r * wa + c] += g[r * (wa + wb) + c];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < wb; ++c)
          b->grad.data()[r * wb + c] += g[r * (wa + wb) + wa + c];
    }
  });
}

/// Slice [start, start+len) of the last axis.
inline Var slice_lastdim(const Var& x, int64_t start, int64_t len) {
  const auto& s = x->value.shape();
  const int64_t w = s.back();
  require(start >= 0 && start + len <= w, ErrorCode::ShapeMismatch, "slice bounds");
  Shape so = s;
  so.back() = len;
  Tensor out(so);
  const int64_t rows = x->value.numel() / w;
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(x->value.data() + r * w + start, len, out.data() + r * len);
  return make_result(std::move(out), {x}, [x, rows, w, start, len](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < len; ++c)
        x->grad.data()[r * w + start + c] += n.grad.data()[r * len + c];
  });
}

/// General axis permutation (copying). perm[i] = source axis of output axis i.
inline Var permute(const Var& x, const std::vector<int>& perm) {
  const auto& s = x->value.shape();
  const size_t nd = s.size();
  require(perm.size() == nd, ErrorCode::ShapeMismatch, "permute rank");
  Shape so(nd);
  for (size_t i = 0; i < nd; ++i) so[i] = s[perm[i]];

  std::vector<int64_t> in_strides(nd, 1), out_strides(nd, 1);
  for (int i = static_cast<int>(nd) - 2; i >= 0; --i) {
    in_strides[i] = in_strides[i + 1] * s[i + 1];
    out_strides[i] = out_strides[i + 1] * so[i + 1];
  }

  auto copy_permuted = [nd](const float* src, float* dst, const Shape& out_shape,
                            const std::vector<int64_t>& src_strides,
                            const std::vector<int64_t>& dst_strides,
                            const std::vector<int>& axis_of) {
    const int64_t total = shape_numel(out_shape);
    std::vector<int64_t> idx(nd, 0);
    for (int64_t flat = 0; flat < total; ++flat) {
      int64_t src_off = 0;
      for (size_t i = 0; i < nd; ++i) src_off += idx[i] * src_strides[axis_of[i]];
      dst[flat] = src[src_off];
      for (int i = static_cast<int>(nd) - 1; i >= 0; --i) {
        if (++idx[i] < out_shape[i]) break;
        idx[i] = 0;
      }
    }
    (void)dst_strides;
  };

  Tensor out(so);
  copy_permuted(x->value.data(), out.data(), so, in_strides, out_strides, perm);
  return make_result(std::move(out), {x},
                     [x, so, in_strides, out_strides, perm, copy_permuted](Node& n) {
                       if (!x->requires_grad) return;
                       x->ensure_grad();
                       // scatter: walk output order, accumulate into source offsets
                       const size_t nd = perm.size();
                       const int64_t total = n.grad.numel();
                       std::vector<int64_t> idx(nd, 0);
                       for (int64_t flat = 0; flat < total; ++flat) {
                         int64_t src_off = 0;
                         for (size_t i = 0; i < nd; ++i) src_off += idx[i] * in_strides[perm[i]];
                         x->grad.data()[src_off] += n.grad.data()[flat];
                         for (int i = static_cast<int>(nd) - 1; i >= 0; --i) {
                           if (++idx[i] < so[i]) break;
                           idx[i] = 0;
                         }
                       }
                     });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x->value.reshape(std::move(shape));
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    accumulate(x, n.grad.reshape(x->value.shape()));
  });
}

/// Cyclic shift over dims 1 and 2 of a [N, H, W, C] tensor.
inline Var roll_hw(const Var& x, int64_t shift_h, int64_t shift_w) {
  const auto& s = x->value.shape();
  require(s.size() == 4, ErrorCode::ShapeMismatch, "roll_hw expects NHWC");
  const int64_t n = s[0], h = s[1], w = s[2], c = s[3];
  auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
  Tensor out(s);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const int64_t si = wrap(i - shift_h, h), sj = wrap(j - shift_w, w);
        std::copy_n(x->value.data() + ((b * h + si) * w + sj) * c, c,
                    out.data() + ((b * h + i) * w + j) * c);
      }
  return make_result(std::move(out), {x}, [x, n, h, w, c, shift_h, shift_w, wrap](Node& nd) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const int64_t si = wrap(i - shift_h, h), sj = wrap(j - shift_w, w);
          const float* g = nd.grad.data() + ((b * h + i) * w + j) * c;
          float* dst = x->grad.data() + ((b * h + si) * w + sj) * c;
          for (int64_t k = 0; k < c; ++k) dst[k] += g[k];
        }
  });
}

/// Row gather: x [M, W], idx values in [0, M) -> [|idx|, W].
inline Var gather_rows(const Var& x, const std::vector<int64_t>& idx) {
  const int64_t w = x->value.shape().back();
  Tensor out({static_cast<int64_t>(idx.size()), w});
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x->value.data() + idx[r] * w, w, out.data() + r * w);
  return make_result(std::move(out), {x}, [x, idx, w](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (size_t r = 0; r < idx.size(); ++r)
      for (int64_t c = 0; c < w; ++c)
        x->grad.data()[idx[r] * w + c] += n.grad.data()[r * w + c];
  });
}

/// x: [B, G, R] scaled per group: y[b,g,:] = x[b,g,:] * s[g].
inline Var scale_groups(const Var& x, const Var& s) {
  require(x->value.ndim() == 3, ErrorCode::ShapeMismatch, "scale_groups expects [B,G,R]");
  const int64_t b = x->value.dim(0), g = x->value.dim(1), r = x->value.dim(2);
  require(s->value.numel() == g, ErrorCode::ShapeMismatch, "scale_groups width");
  Tensor out = x->value.clone();
  for (int64_t i = 0; i < b; ++i)
    for (int64_t k = 0; k < g; ++k) {
      float* row = out.data() + (i * g + k) * r;
      const float sv = s->value[k];
      for (int64_t j = 0; j < r; ++j) row[j] *= sv;
    }
  return make_result(std::move(out), {x, s}, [x, s, b, g, r](Node& n) {
    if (x->requires_grad) {
      Tensor d = n.grad.clone();
      for (int64_t i = 0; i < b; ++i)
        for (int64_t k = 0; k < g; ++k) {
          float* row = d.data() + (i * g + k) * r;
          for (int64_t j = 0; j < r; ++j) row[j] *= s->value[k];
        }
      accumulate(x, d);
    }
    if (s->requires_grad) {
      s->ensure_grad();
      for (int64_t i = 0; i < b; ++i)
        for (int64_t k = 0; k < g; ++k) {
          const float* gr = n.grad.data() + (i * g + k) * r;
          const float* xv = x->value.data() + (i * g + k) * r;
          double acc = 0.0;
          for (int64_t j = 0; j < r; ++j) acc += static_cast<double>(gr[j]) * xv[j];
          s->grad[k] += static_cast<float>(acc);
        }
    }
  });
}

/// x: [B, G, R] plus bias broadcast over the leading axis: y[b] = x[b] + bias.
/// Pass a non-grad leaf to add a constant (e.g. an attention mask).
inline Var add_group_bias(const Var& x, const Var& bias) {
  require(x->value.ndim() == 3, ErrorCode::ShapeMismatch, "add_group_bias expects [B,G,R]");
  const int64_t b = x->value.dim(0), gr = x->value.dim(1) * x->value.dim(2);
  require(bias->value.numel() == gr, ErrorCode::ShapeMismatch, "add_group_bias size");
  Tensor out = x->value.clone();
  for (int64_t i = 0; i < b; ++i) {
    float* row = out.data() + i * gr;
    for (int64_t j = 0; j < gr; ++j) row[j] += bias->value.data()[j];
  }
  return make_result(std::move(out), {x, bias}, [x, bias, b, gr](Node& n) {
    accumulate(x, n.grad);
    if (bias->requires_grad) {
      bias->ensure_grad();
      Tensor d = Tensor::zeros(bias->value.shape());
      for (int64_t i = 0; i < b; ++i) {
        const float* g = n.grad.data() + i * gr;
        for (int64_t j = 0; j < gr; ++j) d.data()[j] += g[j];
      }
      bias->grad.add_(d);
    }
  });
}

// ---------------------------------------------------------------------------
// normalization / softmax

inline Var softmax_lastdim(const Var& x) {
  const int64_t w = x->value.shape().back();
  const int64_t rows = x->value.numel() / w;
  Tensor out = x->value.clone();
  float* o = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    float* row = o + r * w;
    float mx = row[0];
    for (int64_t c = 1; c < w; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < w; ++c) sum += (row[c] = std::exp(row[c] - mx));
    const float inv = static_cast<float>(1.0 / sum);
    for (int64_t c = 0; c < w; ++c) row[c] *= inv;
  }
  Tensor saved = out;
  return make_result(std::move(out), {x}, [x, saved, rows, w](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float* y = saved.data();
    const float* g = n.grad.data();
    float* dx = x->grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < w; ++c) dot += static_cast<double>(g[r * w + c]) * y[r * w + c];
      for (int64_t c = 0; c < w; ++c)
        dx[r * w + c] += (g[r * w + c] - static_cast<float>(dot)) * y[r * w + c];
    }
  });
}

/// Row-wise L2 normalization of the last axis (cosine-attention prep).
inline Var l2_normalize_lastdim(const Var& x, float eps = 1e-12f) {
  const int64_t w = x->value.shape().back();
  const int64_t rows = x->value.numel() / w;
  Tensor out = x->value.clone();
  Tensor inv_norm({rows});
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const float* row = x->value.data() + r * w;
    for (int64_t c = 0; c < w; ++c) s += static_cast<double>(row[c]) * row[c];
    const float inv = 1.0f / std::max(static_cast<float>(std::sqrt(s)), eps);
    inv_norm[r] = inv;
    float* orow = out.data() + r * w;
    for (int64_t c = 0; c < w; ++c) orow[c] *= inv;
  }
  Tensor saved = out;
  return make_result(std::move(out), {x}, [x, saved, inv_norm, rows, w](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const float* y = saved.data() + r * w;
      const float* g = n.grad.data() + r * w;
      float* dx = x->grad.data() + r * w;
      double dot = 0.0;
      for (int64_t c = 0; c < w; ++c) dot += static_cast<double>(g[c]) * y[c];
      const float inv = inv_norm[r];
      for (int64_t c = 0; c < w; ++c)
        dx[c] += (g[c] - static_cast<float>(dot) * y[c]) * inv;
    }
  });
}

/// LayerNorm over the last axis with learnable gamma/beta of width M.
inline Var layernorm_lastdim(const Var& x, const Var& gamma, const Var& beta,
                             float eps = 1e-5f) {
  const int64_t w = x->value.shape().back();
  require(gamma->value.numel() == w && beta->value.numel() == w, ErrorCode::ShapeMismatch,
          "layernorm affine width");
  const int64_t rows = x->value.numel() / w;
  Tensor out(x->value.shape());
  Tensor xhat(x->value.shape());
  Tensor inv_std({rows});
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = x->value.data() + r * w;
    double mean = 0.0;
    for (int64_t c = 0; c < w; ++c) mean += row[c];
    mean /= w;
    double var = 0.0;
    for (int64_t c = 0; c < w; ++c) {
      const double d = row[c] - mean;
      var += d * d;
    }
    var /= w;
    const float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[r] = istd;
    for (int64_t c = 0; c < w; ++c) {
      const float xh = (row[c] - static_cast<float>(mean)) * istd;
      xhat.data()[r * w + c] = xh;
      out.data()[r * w + c] = xh * gamma->value[c] + beta->value[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, rows, w](Node& n) {
                       const float* g = n.grad.data();
                       if (gamma->requires_grad) {
                         gamma->ensure_grad();
                         beta->ensure_grad();
                         for (int64_t r = 0; r < rows; ++r)
                           for (int64_t c = 0; c < w; ++c) {
                             gamma->grad[c] += g[r * w + c] * xhat[r * w + c];
                             beta->grad[c] += g[r * w + c];
                           }
                       }
                       if (!x->requires_grad) return;
                       x->ensure_grad();
                       for (int64_t r = 0; r < rows; ++r) {
                         double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                         for (int64_t c = 0; c < w; ++c) {
                           const double dxh =
                               static_cast<double>(g[r * w + c]) * gamma->value[c];
                           sum_dxhat += dxh;
                           sum_dxhat_xhat += dxh * xhat[r * w + c];
                         }
                         const float istd = inv_std[r];
                         for (int64_t c = 0; c < w; ++c) {
                           const double dxh =
                               static_cast<double>(g[r * w + c]) * gamma->value[c];
                           x->grad.data()[r * w + c] += static_cast<float>(
                               istd * (dxh - sum_dxhat / w - xhat[r * w + c] * sum_dxhat_xhat / w));
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// reductions / loss

inline Var mean_all(const Var& x) {
  Tensor out({1});
  out[0] = static_cast<float>(x->value.sum() / x->value.numel());
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float g = n.grad[0] / static_cast<float>(x->value.numel());
    for (int64_t i = 0, m = x->grad.numel(); i < m; ++i) x->grad.data()[i] += g;
  });
}

/// Mean over axis 1 of [N, T, C] -> [N, C] (token pooling).
inline Var mean_middle(const Var& x) {
  require(x->value.ndim() == 3, ErrorCode::ShapeMismatch, "mean_middle rank");
  const int64_t n = x->value.dim(0), t = x->value.dim(1), c = x->value.dim(2);
  Tensor out({n, c});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t k = 0; k < t; ++k)
      for (int64_t j = 0; j < c; ++j) out.data()[b * c + j] += x->value.data()[(b * t + k) * c + j];
  out.scale_(1.0f / static_cast<float>(t));
  return make_result(std::move(out), {x}, [x, n, t, c](Node& nd) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const float inv = 1.0f / static_cast<float>(t);
    for (int64_t b = 0; b < n; ++b)
      for (int64_t k = 0; k < t; ++k)
        for (int64_t j = 0; j < c; ++j)
          x->grad.data()[(b * t + k) * c + j] += nd.grad.data()[b * c + j] * inv;
  });
}

/// Weighted cross entropy with label smoothing.
///   L = mean_i  w[y_i] * (-sum_c q_c log softmax(z_i)_c),
///   q = (1-eps) * onehot(y_i) + eps / C.
/// Matches an unweighted CE exactly when all weights are 1.
inline Var weighted_cross_entropy(const Var& logits, const std::vector<int>& labels,
                                  const Tensor& class_weights, float smoothing) {
  require(logits->value.ndim() == 2, ErrorCode::ShapeMismatch, "ce: logits must be [N,C]");
  const int64_t n = logits->value.dim(0), c = logits->value.dim(1);
  require(static_cast<int64_t>(labels.size()) == n, ErrorCode::ShapeMismatch,
          "ce: batch size mismatch");
  require(class_weights.numel() == c, ErrorCode::ShapeMismatch, "ce: weights width");
  for (int y : labels)
    require(y >= 0 && y < c, ErrorCode::LabelOutOfRange,
            "label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");

  // softmax probabilities + per-sample loss
  Tensor probs({n, c});
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const float* z = logits->value.data() + i * c;
    float mx = z[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j]) - mx);
    const double log_z = std::log(sum) + mx;
    double li = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double logp = z[j] - log_z;
      probs.data()[i * c + j] = static_cast<float>(std::exp(logp));
      const double q = (j == labels[i] ? 1.0 - smoothing : 0.0) + smoothing / c;
      li -= q * logp;
    }
    total += class_weights[labels[i]] * li;
  }
  Tensor out({1});
  out[0] = static_cast<float>(total / n);

  return make_result(std::move(out), {logits},
                     [logits, labels, class_weights, smoothing, probs, n, c](Node& node) {
                       if (!logits->requires_grad) return;
                       logits->ensure_grad();
                       const float g = node.grad[0] / static_cast<float>(n);
                       for (int64_t i = 0; i < n; ++i) {
                         const float w = class_weights[labels[i]];
                         for (int64_t j = 0; j < c; ++j) {
                           const float q = (j == labels[i] ? 1.0f - smoothing : 0.0f) +
                                           smoothing / static_cast<float>(c);
                           logits->grad.data()[i * c + j] +=
                               g * w * (probs[i * c + j] - q);
                         }
                       }
                     });
}

}  // namespace artgest::ops
