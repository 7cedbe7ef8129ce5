/* Copyright 2026 the bspg authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "bspg/rng.hpp"
#include "bspg/tensor.hpp"

namespace bspg::test {

template <typename S>
Tensor<S> random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

// Central finite difference through an arbitrary scalar loss. `value` must
// re-run the forward pass reading the current parameter contents.
inline double central_diff(double* x, const std::function<double()>& value, double eps = 1e-5) {
  const double saved = *x;
  *x = saved + eps;
  const double up = value();
  *x = saved - eps;
  const double down = value();
  *x = saved;
  return (up - down) / (2 * eps);
}

// Worst relative error between analytic and finite-difference gradients over
// every element of a parameter tensor.
inline double max_grad_rel_err(Tensor<double>& param, const Tensor<double>& grad,
                               const std::function<double()>& value, double eps = 1e-5) {
  double worst = 0;
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double fd = central_diff(&param[i], value, eps);
    const double an = grad[i];
    const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
    worst = std::max(worst, std::fabs(fd - an) / denom);
  }
  return worst;
}

}  // namespace bspg::test
