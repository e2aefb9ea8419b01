#include "affdec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace affdec {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  backward(loss_fn());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (auto& p : params) {
    const std::vector<double> analytic(p.tensor.grad().begin(),
                                       p.tensor.grad().end());
    auto values = p.tensor.mutable_values();
    bool failed = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double delta) {
        values[i] = saved + delta;
        return loss_fn().item();
      };
      const double h = options.eps;
      const double d1 = at(h) - at(-h);
      double numeric = d1 / (2.0 * h);
      if (options.fourth_order) numeric = (8.0 * d1 - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      values[i] = saved;
      const double denom = std::max(
          {std::abs(analytic[i]), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.n_checked;
      if (rel > options.tol || !std::isfinite(rel)) failed = true;
      if (rel > report.max_rel_err || !std::isfinite(rel)) {
        report.max_rel_err = std::isfinite(rel) ? rel : HUGE_VAL;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
    if (failed) report.failing.push_back(p.name);
  }
  return report;
}

}  // namespace affdec
