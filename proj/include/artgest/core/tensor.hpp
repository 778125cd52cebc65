#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "artgest/core/error.hpp"
#include "artgest/core/rng.hpp"

namespace artgest {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

/// Dense row-major float32 tensor. Copies are shallow (shared storage);
/// use clone() for a deep copy. All ops in ops.hpp produce fresh storage,
/// so aliasing never leaks across graph nodes.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<float>>(shape_numel(shape_), 0.0f)) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.begin(), t.end(), value);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0f); }

  static Tensor from_vector(Shape shape, const std::vector<float>& values) {
    Tensor t(std::move(shape));
    require(static_cast<int64_t>(values.size()) == t.numel(), ErrorCode::ShapeMismatch,
            "from_vector: " + std::to_string(values.size()) + " values for shape " +
                shape_str(t.shape()));
    std::copy(values.begin(), values.end(), t.begin());
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& v : t) v = static_cast<float>(rng.normal(0.0, stddev));
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, float lo, float hi) {
    Tensor t(std::move(shape));
    for (auto& v : t) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
  }

  bool empty() const { return !data_; }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  float* begin() { return data(); }
  float* end() { return data() + numel(); }
  const float* begin() const { return data(); }
  const float* end() const { return data() + numel(); }

  float& operator[](int64_t i) { return (*data_)[i]; }
  float operator[](int64_t i) const { return (*data_)[i]; }

  /// Element access for tests and glue code; hot loops index raw data().
  template <typename... Ix>
  float& at(Ix... ix) {
    return (*data_)[flat_index({static_cast<int64_t>(ix)...})];
  }
  template <typename... Ix>
  float at(Ix... ix) const {
    return (*data_)[flat_index({static_cast<int64_t>(ix)...})];
  }

  /// Same storage, new shape (numel must match).
  Tensor reshape(Shape new_shape) const {
    require(shape_numel(new_shape) == numel(), ErrorCode::ShapeMismatch,
            "reshape " + shape_str(shape_) + " -> " + shape_str(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<float>>(*data_);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(float v) { std::fill(begin(), end(), v); }

  void add_(const Tensor& o) {
    require(same_shape(o), ErrorCode::ShapeMismatch,
            "add_: " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    const float* src = o.data();
    float* dst = data();
    for (int64_t i = 0, n = numel(); i < n; ++i) dst[i] += src[i];
  }

  void scale_(float s) {
    for (auto& v : *this) v *= s;
  }

  double sum() const {
    double acc = 0.0;
    for (float v : *this) acc += v;
    return acc;
  }

  double norm() const {
    double acc = 0.0;
    for (float v : *this) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
  }

  bool all_finite() const {
    return std::all_of(begin(), end(), [](float v) { return std::isfinite(v); });
  }

 private:
  int64_t flat_index(std::initializer_list<int64_t> ix) const {
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : ix) flat = flat * shape_[k++] + i;
    return flat;
  }

  Shape shape_;
  std::shared_ptr<std::vector<float>> data_;
};

}  // namespace artgest
