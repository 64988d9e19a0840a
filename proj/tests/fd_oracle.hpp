/*
 Copyright 2026 The unimodal-pg Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

// Test-only finite-difference oracle: evaluates plain forward passes, never
// touches the adjoint code it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "upg/autodiff.hpp"
#include "upg/rng.hpp"

namespace upg::testing {

// f takes the perturbable inputs and returns a scalar.
inline double central_difference(const std::function<double(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, std::size_t which, std::size_t coord,
                                 double step = 1e-5) {
  const double x = inputs[which][coord];
  inputs[which][coord] = x + step;
  const double up = f(inputs);
  inputs[which][coord] = x - step;
  const double down = f(inputs);
  return (up - down) / (2.0 * step);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace upg::testing
