#pragma once

// Central finite-difference verification of analytic gradients.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "affdec/tensor.hpp"

namespace affdec {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckOptions {
  // Fourth-order central difference, f'(x) ~ [8(f(x+h) - f(x-h)) -
  // (f(x+2h) - f(x-2h))] / 12h. The larger step keeps round-off well below
  // the tolerance on gradients that are exactly zero.
  double eps = 1e-4;
  bool fourth_order = true;
  double tol = 1e-4;
  // Denominator floor: rel = |a - n| / max(|a|, |n|, floor). Keeps
  // gradients that are zero up to rounding from dominating the report.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t n_checked = 0;
  // Names of parameters with at least one element above tolerance.
  std::vector<std::string> failing;

  bool passed() const { return failing.empty(); }
};

// `loss_fn` must be a pure function of the parameter values and return a
// scalar. Analytic gradients come from one backward pass; each element is
// then perturbed by +-eps (and +-2eps) with recording disabled.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<NamedTensor> params,
                           const GradCheckOptions& options = {});

}  // namespace affdec
