#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "emerg/autodiff.hpp"

namespace emerg::testing {

// Relative error between an analytic and a numeric gradient tensor, measured
// as ||a - n|| / max(||a||, ||n||). Two (near-)zero gradients compare equal.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nn));
  if (denom < 1e-10) return 0.0;
  return std::sqrt(diff) / denom;
}

using ScalarFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

// Worst relative error over all inputs between reverse-mode gradients of `f`
// and central finite differences with the given step.
inline double gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double step = 1e-5) {
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(ad::Var::leaf(t));
  const auto analytic = ad::grad(f(leaves), leaves);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        ad::NoGradGuard guard;
        std::vector<ad::Var> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          probe.push_back(ad::Var::constant(std::move(t)));
        }
        return f(probe).item();
      };
      numeric[i] = (eval(step) - eval(-step)) / (2 * step);
    }
    worst = std::max(worst, relative_error(analytic[k].value(), numeric));
  }
  return worst;
}

}  // namespace emerg::testing
