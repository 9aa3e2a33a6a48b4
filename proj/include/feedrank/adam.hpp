#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "feedrank/tensor.hpp"

namespace feedrank {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over an ordered parameter list. Deterministic: the
// update is a pure function of (params, grads, state).
class Adam {
 public:
  Adam(AdamConfig cfg, std::span<const Tensor> params);

  void step(std::span<Tensor> params, std::span<const Tensor> grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace feedrank
