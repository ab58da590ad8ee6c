#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "octevo/tensor.hpp"

namespace octevo {

// Adam with decoupled weight decay. One state per optimized parameter set;
// moment buffers are keyed by parameter name and allocated on first use.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::map<std::string, std::pair<std::vector<Real>, std::vector<Real>>>
      moments;  // name -> (m, v)
};

// p <- p * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps), bias-corrected.
// Parameters without a populated gradient are skipped entirely (no decay
// either), so frozen sub-modules stay bitwise intact.
// Throws TrainingError naming the parameter on a non-finite gradient.
void adam_step(const std::vector<std::pair<std::string, Tensor*>>& params,
               AdamState& state, double lr, double weight_decay);

}  // namespace octevo
