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

#include "upg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "upg/errors.hpp"
#include "upg/heads.hpp"
#include "upg/network.hpp"
#include "upg/rng.hpp"

namespace upg {

namespace {

struct Case {
  std::vector<Tensor> inputs;
  ScalarFunction fn;
};

using CaseFactory = std::function<Case(Rng&)>;

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Uniform draws kept at least `gap` away from every point in `kinks`.
Tensor random_away_from(Shape shape, Rng& rng, double lo, double hi, std::initializer_list<double> kinks, double gap) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    do {
      v = rng.uniform(lo, hi);
    } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < gap; }));
  }
  return t;
}

// Reduces a tensor-valued output to a scalar with fixed random weights.
ScalarFunction projected(std::function<Var(std::span<const Var>)> op, Tensor weights) {
  return [op = std::move(op), weights = std::move(weights)](std::span<const Var> v) {
    const Var out = op(v);
    return sum(mul(out, out.graph->constant(weights.reshaped(out.shape()))));
  };
}

CaseFactory unary_case(std::function<Var(Var)> op, double lo, double hi) {
  return [op, lo, hi](Rng& rng) {
    return Case{{random_tensor({2, 3}, rng, lo, hi)},
                projected([op](std::span<const Var> v) { return op(v[0]); }, random_tensor({2, 3}, rng, -1, 1))};
  };
}

CaseFactory binary_case(std::function<Var(Var, Var)> op, Shape rhs_shape, double lo, double hi) {
  return [op, rhs_shape, lo, hi](Rng& rng) {
    Tensor b = random_tensor(rhs_shape, rng, lo, hi);
    return Case{{random_tensor({2, 3}, rng, -2, 2), std::move(b)},
                projected([op](std::span<const Var> v) { return op(v[0], v[1]); }, random_tensor({2, 3}, rng, -1, 1))};
  };
}

std::vector<Action> random_discrete_actions(Rng& rng, std::size_t batch, std::size_t dims, std::size_t bins) {
  std::vector<Action> actions(batch);
  for (Action& a : actions) {
    for (std::size_t i = 0; i < dims; ++i) a.indices.push_back(rng.index(bins));
  }
  return actions;
}

std::vector<Action> random_continuous_actions(Rng& rng, std::size_t batch, std::size_t dims, double lo, double hi) {
  std::vector<Action> actions(batch);
  for (Action& a : actions) {
    for (std::size_t i = 0; i < dims; ++i) a.values.push_back(rng.uniform(lo, hi));
  }
  return actions;
}

// log_prob and entropy combined with random weights so both adjoints are exercised.
ScalarFunction head_objective(std::function<DistOutput(std::span<const Var>)> head, std::vector<Action> actions,
                              double entropy_weight) {
  return [head = std::move(head), actions = std::move(actions), entropy_weight](std::span<const Var> v) {
    const DistOutput d = head(v);
    return sum(d.log_prob(actions)) + scale(sum(d.entropy()), entropy_weight);
  };
}

std::vector<std::pair<std::string, CaseFactory>> suite_entries() {
  constexpr std::size_t kBatch = 2;
  constexpr std::size_t kDims = 2;
  constexpr std::size_t kBins = 6;
  std::vector<std::pair<std::string, CaseFactory>> e;

  e.emplace_back("matmul", [](Rng& rng) {
    return Case{{random_tensor({3, 4}, rng, -1, 1), random_tensor({4, 2}, rng, -1, 1)},
                projected([](std::span<const Var> v) { return matmul(v[0], v[1]); }, random_tensor({3, 2}, rng, -1, 1))};
  });
  e.emplace_back("add", binary_case([](Var a, Var b) { return a + b; }, {2, 3}, -2, 2));
  e.emplace_back("add_broadcast", binary_case([](Var a, Var b) { return a + b; }, {1}, -2, 2));
  e.emplace_back("sub", binary_case([](Var a, Var b) { return a - b; }, {2, 3}, -2, 2));
  e.emplace_back("mul", binary_case([](Var a, Var b) { return a * b; }, {2, 3}, -2, 2));
  e.emplace_back("mul_broadcast", binary_case([](Var a, Var b) { return a * b; }, {1}, -2, 2));
  e.emplace_back("div", binary_case([](Var a, Var b) { return a / b; }, {2, 3}, 0.5, 2.0));
  e.emplace_back("div_broadcast", binary_case([](Var a, Var b) { return a / b; }, {1}, 0.5, 2.0));
  e.emplace_back("minimum", [](Rng& rng) {
    Tensor a = random_tensor({2, 3}, rng, -2, 2);
    Tensor b(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = a[i] + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
    return Case{{std::move(a), std::move(b)},
                projected([](std::span<const Var> v) { return minimum(v[0], v[1]); }, random_tensor({2, 3}, rng, -1, 1))};
  });
  e.emplace_back("neg", unary_case([](Var x) { return neg(x); }, -2, 2));
  e.emplace_back("scale", unary_case([](Var x) { return scale(x, 1.7); }, -2, 2));
  e.emplace_back("add_scalar", unary_case([](Var x) { return add_scalar(x, -0.3); }, -2, 2));
  e.emplace_back("exp", unary_case([](Var x) { return exp(x); }, -2, 2));
  e.emplace_back("log", unary_case([](Var x) { return log(x); }, 0.2, 3));
  e.emplace_back("tanh", unary_case([](Var x) { return tanh(x); }, -2, 2));
  e.emplace_back("sigmoid", unary_case([](Var x) { return sigmoid(x); }, -4, 4));
  e.emplace_back("softplus", unary_case([](Var x) { return softplus(x); }, -5, 5));
  e.emplace_back("lgamma", unary_case([](Var x) { return lgamma(x); }, 0.5, 5));
  e.emplace_back("digamma", unary_case([](Var x) { return digamma(x); }, 0.5, 5));
  e.emplace_back("square", unary_case([](Var x) { return square(x); }, -2, 2));
  e.emplace_back("clamp", [](Rng& rng) {
    return Case{{random_away_from({2, 3}, rng, -2, 2, {-1.0, 1.0}, 0.01)},
                projected([](std::span<const Var> v) { return clamp(v[0], -1.0, 1.0); }, random_tensor({2, 3}, rng, -1, 1))};
  });
  e.emplace_back("sum", [](Rng& rng) {
    return Case{{random_tensor({2, 3}, rng, -2, 2)}, [](std::span<const Var> v) { return sum(square(v[0])); }};
  });
  e.emplace_back("mean", [](Rng& rng) {
    return Case{{random_tensor({2, 3}, rng, -2, 2)}, [](std::span<const Var> v) { return mean(square(v[0])); }};
  });
  e.emplace_back("sum_rows", [](Rng& rng) {
    return Case{{random_tensor({3, 4}, rng, -2, 2)},
                projected([](std::span<const Var> v) { return sum_rows(v[0]); }, random_tensor({3}, rng, -1, 1))};
  });
  e.emplace_back("reshape", [](Rng& rng) {
    return Case{{random_tensor({2, 3}, rng, -2, 2)},
                projected([](std::span<const Var> v) { return reshape(v[0], Shape{3, 2}); },
                          random_tensor({3, 2}, rng, -1, 1))};
  });
  e.emplace_back("add_rowwise", [](Rng& rng) {
    return Case{{random_tensor({3, 4}, rng, -2, 2), random_tensor({4}, rng, -2, 2)},
                projected([](std::span<const Var> v) { return add_rowwise(v[0], v[1]); }, random_tensor({3, 4}, rng, -1, 1))};
  });
  e.emplace_back("broadcast_rows", [](Rng& rng) {
    return Case{{random_tensor({4}, rng, -2, 2)},
                projected([](std::span<const Var> v) { return broadcast_rows(v[0], 3); }, random_tensor({3, 4}, rng, -1, 1))};
  });
  e.emplace_back("slice_cols", [](Rng& rng) {
    return Case{{random_tensor({3, 5}, rng, -2, 2)},
                projected([](std::span<const Var> v) { return slice_cols(v[0], 1, 4); }, random_tensor({3, 3}, rng, -1, 1))};
  });
  e.emplace_back("gather", [](Rng& rng) {
    std::vector<std::size_t> idx{rng.index(5), rng.index(5), rng.index(5)};
    return Case{{random_tensor({3, 5}, rng, -2, 2)},
                projected([idx](std::span<const Var> v) { return gather(v[0], idx); }, random_tensor({3}, rng, -1, 1))};
  });
  e.emplace_back("softmax", [](Rng& rng) {
    const double t = rng.uniform(0.5, 3.0);
    return Case{{random_tensor({3, 5}, rng, -3, 3)},
                projected([t](std::span<const Var> v) { return softmax(v[0], t); }, random_tensor({3, 5}, rng, -1, 1))};
  });
  e.emplace_back("log_softmax", [](Rng& rng) {
    const double t = rng.uniform(0.5, 3.0);
    return Case{{random_tensor({3, 5}, rng, -3, 3)},
                projected([t](std::span<const Var> v) { return log_softmax(v[0], t); }, random_tensor({3, 5}, rng, -1, 1))};
  });
  e.emplace_back("poisson_log_pmf", [](Rng& rng) {
    return Case{{random_tensor({3}, rng, 0.3, 8.0)},
                projected([](std::span<const Var> v) { return poisson_log_pmf(v[0], 7); }, random_tensor({3, 7}, rng, -1, 1))};
  });
  e.emplace_back("ordinal_logits", [](Rng& rng) {
    return Case{{random_tensor({3, 6}, rng, 0.05, 0.95)},
                projected([](std::span<const Var> v) { return ordinal_logits(v[0]); }, random_tensor({3, 6}, rng, -1, 1))};
  });

  e.emplace_back("head:gibbs", [](Rng& rng) {
    const double t = rng.uniform(0.5, 3.0);
    return Case{{random_tensor({kBatch, kDims * kBins}, rng, -2, 2)},
                head_objective([t](std::span<const Var> v) { return gibbs_head(v[0], kDims, kBins, t); },
                               random_discrete_actions(rng, kBatch, kDims, kBins), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:gibbs-learned-tau", [](Rng& rng) {
    return Case{{random_tensor({kBatch, kDims * kBins}, rng, -2, 2), random_tensor({1}, rng, 1.6, 2.9)},
                head_objective(
                    [](std::span<const Var> v) { return gibbs_head(v[0], kDims, kBins, clamp(v[1], 1.5, 3.0)); },
                    random_discrete_actions(rng, kBatch, kDims, kBins), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:ordinal", [](Rng& rng) {
    const double t = rng.uniform(0.5, 3.0);
    return Case{{random_tensor({kBatch, kDims * kBins}, rng, -2, 2)},
                head_objective([t](std::span<const Var> v) { return ordinal_head(v[0], kDims, kBins, t); },
                               random_discrete_actions(rng, kBatch, kDims, kBins), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:unimodal", [](Rng& rng) {
    const double t = rng.uniform(1.5, 3.0);
    return Case{{random_tensor({kBatch, kDims}, rng, 0.5, 6.0)},
                head_objective(
                    [t](std::span<const Var> v) { return unimodal_head(v[0], ActionGrid(kDims, kBins), t); },
                    random_discrete_actions(rng, kBatch, kDims, kBins), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:unimodal-learned-tau", [](Rng& rng) {
    return Case{{random_tensor({kBatch, kDims}, rng, 0.5, 6.0), random_tensor({1}, rng, 1.6, 2.9)},
                head_objective(
                    [](std::span<const Var> v) {
                      return unimodal_head(v[0], ActionGrid(kDims, kBins), clamp(v[1], 1.5, 3.0));
                    },
                    random_discrete_actions(rng, kBatch, kDims, kBins), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:gaussian", [](Rng& rng) {
    return Case{{random_tensor({kBatch, kDims}, rng, -1, 1), random_tensor({kDims}, rng, -1, 0.5)},
                head_objective([](std::span<const Var> v) { return gaussian_head(v[0], v[1], false); },
                               random_continuous_actions(rng, kBatch, kDims, -1.5, 1.5), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:gaussian-tanh", [](Rng& rng) {
    return Case{{random_tensor({kBatch, kDims}, rng, -1, 1), random_tensor({kDims}, rng, -1, 0.5)},
                head_objective([](std::span<const Var> v) { return gaussian_head(v[0], v[1], true); },
                               random_continuous_actions(rng, kBatch, kDims, -1.5, 1.5), rng.uniform(-1, 1))};
  });
  e.emplace_back("head:beta", [](Rng& rng) {
    return Case{{random_tensor({kBatch, 2 * kDims}, rng, -2, 2)},
                head_objective([](std::span<const Var> v) { return beta_head(v[0]); },
                               random_continuous_actions(rng, kBatch, kDims, -0.95, 0.95), rng.uniform(-1, 1))};
  });
  e.emplace_back("mlp-loss", [](Rng& rng) {
    Tensor target = random_tensor({4, 2}, rng, -1, 1);
    return Case{{random_tensor({4, 3}, rng, -1, 1), random_tensor({3, 5}, rng, -1, 1), random_tensor({5}, rng, -0.5, 0.5),
                 random_tensor({5, 2}, rng, -1, 1), random_tensor({2}, rng, -0.5, 0.5)},
                [target](std::span<const Var> v) {
                  const Var out = mlp_forward(v[0], v.subspan(1));
                  return sum(square(out - out.graph->constant(target)));
                }};
  });
  return e;
}

double evaluate(const ScalarFunction& fn, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.constant(t));
  return fn(vars).item();
}

}  // namespace

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradient(const std::string& name, const ScalarFunction& fn, const std::vector<Tensor>& inputs,
                               double step, double tolerance) {
  GradCheckResult result{name, 1, 0, 0.0, true};
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.variable(t));
  const Var root = fn(vars);
  g.backward(root);

  std::vector<Tensor> shifted = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = g.grad(vars[i]);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i][k];
      shifted[i][k] = x + step;
      const double up = evaluate(fn, shifted);
      shifted[i][k] = x - step;
      const double down = evaluate(fn, shifted);
      shifted[i][k] = x;
      const double numeric = (up - down) / (2.0 * step);
      result.max_relative_error = std::max(result.max_relative_error, gradient_relative_error(analytic[k], numeric));
      ++result.coordinates;
    }
  }
  result.passed = result.max_relative_error <= tolerance;
  return result;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t cases, double tolerance) {
  std::vector<GradCheckResult> results;
  const auto entries = suite_entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto& [name, factory] = entries[e];
    Rng rng(mix_seed(seed, e));
    GradCheckResult total{name, 0, 0, 0.0, true};
    for (std::size_t c = 0; c < cases; ++c) {
      const Case k = factory(rng);
      const GradCheckResult r = check_gradient(name, k.fn, k.inputs, 1e-5, tolerance);
      total.cases += 1;
      total.coordinates += r.coordinates;
      total.max_relative_error = std::max(total.max_relative_error, r.max_relative_error);
    }
    total.passed = total.max_relative_error <= tolerance;
    results.push_back(total);
  }
  return results;
}

}  // namespace upg
