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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "upg/autodiff.hpp"

namespace upg {

struct GradCheckResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};

// |a - n| / max(|a|, |n|, 1e-3).
double gradient_relative_error(double analytic, double numeric);

// Builds fn on a fresh graph from `inputs`, back-propagates its (scalar) output
// and compares every input coordinate against central differences.
using ScalarFunction = std::function<Var(std::span<const Var>)>;
GradCheckResult check_gradient(const std::string& name, const ScalarFunction& fn, const std::vector<Tensor>& inputs,
                               double step = 1e-5, double tolerance = 1e-5);

// Randomized check of every autodiff primitive, every head's log_prob and
// entropy, and a two-layer MLP loss; `cases` random draws per entry.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t cases, double tolerance = 1e-5);

}  // namespace upg
