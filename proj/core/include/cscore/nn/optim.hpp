#pragma once

#include <cstdint>
#include <vector>

#include "cscore/nn/params.hpp"

namespace cs::nn {

// Adam with a linear learning-rate ramp from base_lr down to
// base_lr * decay_factor at total_steps. Moments live per parameter in
// registration order; gradients are zeroed after each step so that a
// zero-gradient step is a fixed point.
struct AdamConfig {
  double base_lr = 8e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 0.1;
  std::int64_t total_steps = 1;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {
    check_config(cfg.total_steps >= 1, "adam: total_steps >= 1");
    check_config(cfg.base_lr > 0.0, "adam: base_lr > 0");
  }

  std::int64_t step_count() const { return step_count_; }

  // lr used by step number s (1-based)
  double lr_at(std::int64_t s) const {
    if (cfg_.total_steps <= 1) return cfg_.base_lr;
    const double frac =
        static_cast<double>(s - 1) / static_cast<double>(cfg_.total_steps - 1);
    return cfg_.base_lr * (1.0 - (1.0 - cfg_.decay_factor) * frac);
  }

  void step(ParameterStore& store);

 private:
  AdamConfig cfg_;
  std::int64_t step_count_ = 0;
  std::vector<TensorF> m_, v_;
};

}  // namespace cs::nn
