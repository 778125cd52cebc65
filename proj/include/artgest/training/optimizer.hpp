#pragma once

#include <cmath>
#include <vector>

#include "artgest/core/autodiff.hpp"

namespace artgest::training {

enum class OptimizerKind { adamw, sgd };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::adamw ? "adamw" : "sgd";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "sgd") return OptimizerKind::sgd;
  fail(ErrorCode::InvalidArgument, "unknown optimizer '" + s + "'");
}

enum class LrSchedule { constant, cosine };

inline const char* to_string(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "cosine";
}

inline LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  fail(ErrorCode::InvalidArgument, "unknown lr schedule '" + s + "'");
}

/// Cosine decay factor for 0-based epoch e of E total; constant returns 1.
inline double lr_scale(LrSchedule schedule, int64_t epoch, int64_t total_epochs) {
  if (schedule == LrSchedule::constant) return 1.0;
  return 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                               static_cast<double>(std::max<int64_t>(1, total_epochs))));
}

struct ParamGroup {
  std::vector<Var> params;
  double base_lr = 1e-3;
};

/// AdamW (decoupled weight decay) or SGD with momentum over parameter
/// groups. All state is per-parameter and deterministic.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<ParamGroup> groups, double weight_decay)
      : kind_(kind), groups_(std::move(groups)), weight_decay_(weight_decay) {
    for (const auto& g : groups_)
      for (const auto& p : g.params) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
      }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) p->zero_grad();
  }

  /// One update; lr_factor multiplies every group's base lr (schedules).
  void step(double lr_factor = 1.0) {
    ++t_;
    size_t slot = 0;
    for (auto& g : groups_) {
      const double lr = g.base_lr * lr_factor;
      for (auto& p : g.params) {
        Tensor& m = m_[slot];
        Tensor& v = v_[slot];
        ++slot;
        if (p->grad.empty()) continue;
        float* w = p->value.data();
        const float* grad = p->grad.data();
        if (kind_ == OptimizerKind::adamw) {
          const double bc1 = 1.0 - std::pow(kBeta1, t_);
          const double bc2 = 1.0 - std::pow(kBeta2, t_);
          for (int64_t i = 0, n = p->value.numel(); i < n; ++i) {
            m[i] = static_cast<float>(kBeta1 * m[i] + (1.0 - kBeta1) * grad[i]);
            v[i] = static_cast<float>(kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i]);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= static_cast<float>(lr * (mhat / (std::sqrt(vhat) + kEps) +
                                             weight_decay_ * w[i]));
          }
        } else {
          for (int64_t i = 0, n = p->value.numel(); i < n; ++i) {
            m[i] = static_cast<float>(kMomentum * m[i] + grad[i]);
            w[i] -= static_cast<float>(lr * (m[i] + weight_decay_ * w[i]));
          }
        }
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  static constexpr double kMomentum = 0.9;

  OptimizerKind kind_;
  std::vector<ParamGroup> groups_;
  double weight_decay_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace artgest::training
