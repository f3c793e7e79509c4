#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pcil/autodiff.hpp"
#include "pcil/errors.hpp"
#include "pcil/optim.hpp"

namespace pcil {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

// Compare analytic gradients against central finite differences with step h.
// The closure must rebuild the scalar loss from current parameter values and
// stay tie-free at the probe point (max/argmax selections must not flip).
inline GradCheckResult grad_check(const std::function<NodePtr()>& loss_fn, ParamSet& params,
                                  double h = 1e-4) {
  params.zero_grad();
  NodePtr loss = loss_fn();
  if (!std::isfinite(loss->values()[0])) throw NumericError("grad_check: non-finite loss");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.entries().size());
  for (auto& e : params.entries()) {
    e.node->data.ensure_grad();
    analytic.push_back(e.node->data.grad);
  }

  auto eval = [&]() {
    const double v = loss_fn()->values()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss at probe");
    return v;
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.entries().size(); ++pi) {
    auto& e = params.entries()[pi];
    for (std::size_t i = 0; i < e.node->size(); ++i) {
      double& slot = e.node->data.values[i];
      const double saved = slot;
      slot = saved + h;
      const double up = eval();
      slot = saved - h;
      const double down = eval();
      slot = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_error(analytic[pi][i], numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = e.name;
        result.worst_index = i;
        result.analytic = analytic[pi][i];
        result.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace pcil
