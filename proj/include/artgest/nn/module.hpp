#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "artgest/core/autodiff.hpp"

namespace artgest::nn {

/// Base for parameterized network pieces. Tracks named parameters, named
/// buffers (non-learned state such as batchnorm running stats) and child
/// modules; supports recursive train/eval switching and state export for
/// checkpoints. Names use dotted paths ("head.fc1.weight").
class Module {
 public:
  virtual ~Module() = default;

  void set_training(bool on) {
    training_ = on;
    for (auto& [name, child] : children_) child->set_training(on);
  }
  bool is_training() const { return training_; }

  std::vector<std::pair<std::string, Var>> named_parameters() const {
    std::vector<std::pair<std::string, Var>> out;
    collect_params("", out);
    return out;
  }

  std::vector<Var> parameters() const {
    std::vector<Var> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  std::vector<std::pair<std::string, Tensor>> named_buffers() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect_buffers("", out);
    return out;
  }

  /// Parameters followed by buffers; the full serializable state.
  std::vector<std::pair<std::string, Tensor>> named_state() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, p] : named_parameters()) out.emplace_back(name, p->value);
    for (auto& [name, b] : named_buffers()) out.emplace_back(name, b);
    return out;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (auto& p : parameters()) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p->zero_grad();
  }

 protected:
  Var add_parameter(const std::string& name, Tensor init) {
    Var v = make_leaf(std::move(init), /*requires_grad=*/true);
    params_.emplace_back(name, v);
    return v;
  }

  /// Buffers share storage with the returned tensor, so in-place updates
  /// (running stats) are visible to named_state().
  Tensor add_buffer(const std::string& name, Tensor init) {
    buffers_.emplace_back(name, init);
    return init;
  }

  template <typename T>
  T* add_module(const std::string& name, std::unique_ptr<T> child) {
    T* raw = child.get();
    children_.emplace_back(name, std::move(child));
    return raw;
  }

 private:
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Var>>& out) const {
    for (auto& [name, p] : params_) out.emplace_back(prefix + name, p);
    for (auto& [name, child] : children_) child->collect_params(prefix + name + ".", out);
  }
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) const {
    for (auto& [name, b] : buffers_) out.emplace_back(prefix + name, b);
    for (auto& [name, child] : children_) child->collect_buffers(prefix + name + ".", out);
  }

  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = true;
};

/// A module with the plain one-in-one-out forward signature.
class Layer : public Module {
 public:
  virtual Var forward(const Var& x) = 0;
};

class Sequential : public Layer {
 public:
  template <typename T>
  T* push(std::unique_ptr<T> layer) {
    T* raw = add_module(std::to_string(size_++), std::move(layer));
    seq_.push_back(raw);
    return raw;
  }

  Var forward(const Var& x) override {
    Var v = x;
    for (Layer* l : seq_) v = l->forward(v);
    return v;
  }

  bool empty() const { return seq_.empty(); }

 private:
  std::vector<Layer*> seq_;
  int size_ = 0;
};

}  // namespace artgest::nn
