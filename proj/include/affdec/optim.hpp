#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "affdec/tensor.hpp"

namespace affdec {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam on each tensor's accumulated gradient (a tensor
// without a gradient buffer counts as a zero gradient).
void adam_step(std::span<Tensor> params, AdamState& state,
               const AdamConfig& config);

double global_grad_norm(std::span<const Tensor> params);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace affdec
