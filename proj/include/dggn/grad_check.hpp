#pragma once

// Central finite-difference gradient checker. The builder callback must
// reconstruct the computation from the current leaf values on a fresh tape,
// so the checker can re-evaluate it at perturbed parameters.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "dggn/tensor.hpp"

namespace dggn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), maximised over
// every coordinate of every parameter tensor.
template <typename BuildFn>
GradCheckResult grad_check(BuildFn&& build, std::span<Tensor> params, double step = 1e-5) {
  for (Tensor& p : params) p.zero_grad();
  {
    Tape tape;
    Tensor loss = build(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  auto evaluate = [&]() {
    Tape tape;
    tape.set_recording(false);
    Tensor loss = build(tape);
    const double v = loss.scalar();
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss during finite differences");
    return v;
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].value_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate();
      values[i] = saved - step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = pi;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

template <typename BuildFn>
GradCheckResult grad_check(BuildFn&& build, Tensor& param, double step = 1e-5) {
  return grad_check(std::forward<BuildFn>(build), std::span<Tensor>(&param, 1), step);
}

}  // namespace dggn
