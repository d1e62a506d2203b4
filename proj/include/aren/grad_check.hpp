#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aren/tensor.hpp"

namespace aren {

// Central finite differences against the tape's analytic gradient.
// Instantiate with T=double: float32 rounding would swamp the tolerances the
// checks run at.
template <typename T>
struct GradCheckResult {
  T max_rel_err = T(0);
  int64_t worst_index = -1;
  T analytic_at_worst = T(0);
  T numeric_at_worst = T(0);
};

// f must build a fresh graph from x's current data and return a scalar.
// x's data is perturbed in place and restored.
template <typename T>
GradCheckResult<T> grad_check(const std::function<Tensor<T>()>& f, Tensor<T>& x, T eps) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<T> y = f();
  if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
  y.backward();
  std::vector<T> analytic = x.has_grad() ? x.grad() : std::vector<T>(static_cast<size_t>(x.numel()), T(0));
  x.zero_grad();

  GradCheckResult<T> res;
  T* px = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const T saved = px[i];
    px[i] = saved + eps;
    const T fp = f().item();
    px[i] = saved - eps;
    const T fm = f().item();
    px[i] = saved;
    const T numeric = (fp - fm) / (T(2) * eps);
    const T a = analytic[static_cast<size_t>(i)];
    const T denom = std::max(T(1), std::max(std::abs(a), std::abs(numeric)));
    const T rel = std::abs(a - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic_at_worst = a;
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

}  // namespace aren
