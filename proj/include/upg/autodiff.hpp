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
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "upg/tensor.hpp"

namespace upg {

class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
};

/// Eager reverse-mode tape.
///
/// Nodes are appended in evaluation order, so every node's parents precede it
/// and a single reverse sweep visits each node once. Leaf variables keep a
/// gradient accumulator that survives across backward() calls until
/// zero_grad(); adjoints of interior nodes are scratch per sweep.
class Graph {
 public:
  using BackwardFn =
      std::function<void(const Tensor& out_value, const Tensor& out_adjoint, std::span<Tensor* const> parent_adjoints)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Appends an interior node. `op` names the primitive in error messages.
  Var record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var root);
  void zero_grad();

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
    Tensor grad;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

// Elementwise binary ops. Shapes must match, or one side must hold a single
// element, which is broadcast.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var minimum(Var a, Var b);

// Elementwise unary ops.
Var neg(Var x);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var lgamma(Var x);
Var digamma(Var x);
Var square(Var x);
// Gradient passes where lo <= x <= hi and is zero outside.
Var clamp(Var x, double lo, double hi);

// [m x k] * [k x n] -> [m x n]
Var matmul(Var a, Var b);

Var sum(Var x);
Var mean(Var x);
// Sums each row of a matrix: [r x c] -> [r].
Var sum_rows(Var x);
Var reshape(Var x, Shape shape);
// x [r x c] plus bias [c] on every row.
Var add_rowwise(Var x, Var bias);
// v [c] -> [rows x c].
Var broadcast_rows(Var v, std::size_t rows);
// Columns [begin, end) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t end);
// Picks x[r, index[r]] for each row: [r x c] -> [r].
Var gather(Var x, std::span<const std::size_t> index);

// Row-wise softmax(x / temperature) with max subtraction. Rank-1 input is one row.
Var softmax(Var x, double temperature = 1.0);
Var log_softmax(Var x, double temperature = 1.0);

// Poisson log-PMF table: f [r] -> [r x bins], entry (i, j) = j log f_i - f_i - log j!.
Var poisson_log_pmf(Var rate, std::size_t bins);

// Ordinal logits per row of p [r x K]:
//   out_j = sum_{k <= j} log p_k + sum_{k > j} log(1 - p_k)
// Requires 0 < p < 1.
Var ordinal_logits(Var p);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }

// Scalar helpers shared with the heads.
double softplus_value(double x);
double sigmoid_value(double x);

}  // namespace upg
