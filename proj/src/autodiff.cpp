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

#include "upg/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <string>

#include "upg/errors.hpp"
#include "upg/special.hpp"

namespace upg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ParameterError("variable is not attached to a graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ParameterError("variables belong to different graphs");
  return graph_of(a);
}

std::size_t require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
  return t.shape()[0];
}

template <class Forward, class Derivative>
Var unary(std::string_view op, Var x, Forward forward, Derivative derivative) {
  Graph& g = graph_of(x);
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return g.record(op, std::move(out), {x},
                  [x, derivative](const Tensor& y, const Tensor& adj, std::span<Tensor* const> parents) {
                    const Tensor& in = x.value();
                    Tensor& gx = *parents[0];
                    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += adj[i] * derivative(in[i], y[i]);
                  });
}

// Derivatives receive (a, b) and return d out / d a or d out / d b.
template <class Forward, class DerivA, class DerivB>
Var binary(std::string_view op, Var a, Var b, Forward forward, DerivA deriv_a, DerivB deriv_b) {
  Graph& g = graph_of(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const std::size_t na = ta.size();
  const std::size_t nb = tb.size();
  Shape shape;
  if (ta.shape() == tb.shape()) {
    shape = ta.shape();
  } else if (na == 1) {
    shape = tb.shape();
  } else if (nb == 1) {
    shape = ta.shape();
  } else {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(ta.shape()) + " and " +
                         shape_string(tb.shape()) + " are not broadcast-compatible");
  }
  const std::size_t n = shape_size(shape);
  const bool sa = na == 1 && n != 1;
  const bool sb = nb == 1 && n != 1;
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = forward(ta[sa ? 0 : i], tb[sb ? 0 : i]);
  return g.record(op, std::move(out), {a, b},
                  [a, b, sa, sb, deriv_a, deriv_b](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    const Tensor& ta = a.value();
                    const Tensor& tb = b.value();
                    for (std::size_t i = 0; i < adj.size(); ++i) {
                      const double x = ta[sa ? 0 : i];
                      const double y = tb[sb ? 0 : i];
                      if (parents[0] != nullptr) (*parents[0])[sa ? 0 : i] += adj[i] * deriv_a(x, y);
                      if (parents[1] != nullptr) (*parents[1])[sb ? 0 : i] += adj[i] * deriv_b(x, y);
                    }
                  });
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax temperature must be positive and finite, got " + std::to_string(temperature));
  }
}

}  // namespace

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const Tensor& Var::value() const {
  if (graph == nullptr) throw ParameterError("variable is not attached to a graph");
  return graph->value(*this);
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant contains non-finite values");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("variable contains non-finite values");
  Node n;
  n.grad = Tensor(value.shape());
  n.value = std::move(value);
  n.requires_grad = true;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.graph != this || p.id >= nodes_.size()) throw ParameterError(std::string(op) + ": foreign parent node");
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw ParameterError("variable does not belong to this graph");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!n.leaf) throw ParameterError("gradients are only kept for leaf variables");
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

void Graph::backward(Var root) {
  const Node& r = node(root);
  if (r.value.size() != 1) {
    throw DimensionError("backward() needs a scalar root, got " + shape_string(r.value.shape()));
  }
  if (!r.requires_grad) return;

  std::vector<Tensor> adjoint(root.id + 1);
  std::vector<char> touched(root.id + 1, 0);
  adjoint[root.id] = Tensor(r.value.shape(), 1.0);
  touched[root.id] = 1;
  std::vector<Tensor*> parent_adjoints;

  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (!touched[i]) continue;
    Node& n = nodes_[i];
    if (n.leaf) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.grad[k] += adjoint[i][k];
    } else {
      parent_adjoints.clear();
      for (std::size_t p : n.parents) {
        if (!nodes_[p].requires_grad) {
          parent_adjoints.push_back(nullptr);
          continue;
        }
        if (!touched[p]) {
          adjoint[p] = Tensor(nodes_[p].value.shape());
          touched[p] = 1;
        }
        parent_adjoints.push_back(&adjoint[p]);
      }
      n.backward(n.value, adjoint[i], parent_adjoints);
    }
    adjoint[i] = Tensor();
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) {
    if (n.leaf) n.grad.fill(0.0);
  }
}

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  for (double v : b.value().data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var minimum(Var a, Var b) {
  return binary(
      "minimum", a, b, [](double x, double y) { return std::min(x, y); },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Var neg(Var x) {
  return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var scale(Var x, double c) {
  return unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
  return unary("softplus", x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}

Var lgamma(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("lgamma expects positive arguments");
  }
  return unary("lgamma", x, log_gamma, [](double v, double) { return boost::math::digamma(v); });
}

Var digamma(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("digamma expects positive arguments");
  }
  return unary(
      "digamma", x, [](double v) { return boost::math::digamma(v); },
      [](double v, double) { return boost::math::trigamma(v); });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(Var x, double lo, double hi) {
  if (lo > hi) throw ParameterError("clamp: lower bound exceeds upper bound");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const std::size_t m = require_rank2(ta, "matmul");
  const std::size_t k = require_rank2(tb, "matmul");
  if (ta.shape()[1] != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(ta.shape()) + " x " +
                         shape_string(tb.shape()));
  }
  const std::size_t n = tb.shape()[1];
  Tensor out(Shape{m, n});
  MatrixMap(out.data().data(), m, n).noalias() =
      ConstMatrixMap(ta.data().data(), m, k) * ConstMatrixMap(tb.data().data(), k, n);
  return g.record("matmul", std::move(out), {a, b},
                  [a, b, m, k, n](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    ConstMatrixMap dc(adj.data().data(), m, n);
                    if (parents[0] != nullptr) {
                      MatrixMap(parents[0]->data().data(), m, k).noalias() +=
                          dc * ConstMatrixMap(b.value().data().data(), k, n).transpose();
                    }
                    if (parents[1] != nullptr) {
                      MatrixMap(parents[1]->data().data(), k, n).noalias() +=
                          ConstMatrixMap(a.value().data().data(), m, k).transpose() * dc;
                    }
                  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return g.record("sum", Tensor::scalar(total), {x},
                  [](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    const double d = adj[0];
                    for (double& v : parents[0]->data()) v += d;
                  });
}

Var mean(Var x) {
  const std::size_t n = x.size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var x) {
  Graph& g = graph_of(x);
  const Tensor& t = x.value();
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += t[r * cols + c];
    out[r] = s;
  }
  return g.record("sum_rows", std::move(out), {x},
                  [rows, cols](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gx = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += adj[r];
                    }
                  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  return g.record("reshape", std::move(out), {x},
                  [](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gx = *parents[0];
                    for (std::size_t i = 0; i < adj.size(); ++i) gx[i] += adj[i];
                  });
}

Var add_rowwise(Var x, Var bias) {
  Graph& g = graph_of(x, bias);
  const Tensor& t = x.value();
  const Tensor& b = bias.value();
  const std::size_t rows = require_rank2(t, "add_rowwise");
  const std::size_t cols = t.shape()[1];
  if (b.size() != cols) {
    throw DimensionError("add_rowwise: bias " + shape_string(b.shape()) + " vs matrix " + shape_string(t.shape()));
  }
  Tensor out(t.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = t[r * cols + c] + b[c];
  }
  return g.record("add_rowwise", std::move(out), {x, bias},
                  [rows, cols](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    if (parents[0] != nullptr) {
                      for (std::size_t i = 0; i < adj.size(); ++i) (*parents[0])[i] += adj[i];
                    }
                    if (parents[1] != nullptr) {
                      Tensor& gb = *parents[1];
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) gb[c] += adj[r * cols + c];
                      }
                    }
                  });
}

Var broadcast_rows(Var v, std::size_t rows) {
  Graph& g = graph_of(v);
  const Tensor& t = v.value();
  const std::size_t cols = t.size();
  Tensor out(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = t[c];
  }
  return g.record("broadcast_rows", std::move(out), {v},
                  [rows, cols](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gv = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) gv[c] += adj[r * cols + c];
                    }
                  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(x);
  const Tensor& t = x.value();
  const std::size_t rows = require_rank2(t, "slice_cols");
  const std::size_t cols = t.shape()[1];
  if (begin > end || end > cols) throw IndexError("slice_cols: range out of bounds");
  const std::size_t width = end - begin;
  Tensor out(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = t[r * cols + begin + c];
  }
  return g.record("slice_cols", std::move(out), {x},
                  [rows, cols, begin, width](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gx = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < width; ++c) gx[r * cols + begin + c] += adj[r * width + c];
                    }
                  });
}

Var gather(Var x, std::span<const std::size_t> index) {
  Graph& g = graph_of(x);
  const Tensor& t = x.value();
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  if (index.size() != rows) {
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for " + std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols) throw IndexError("gather: index " + std::to_string(idx[r]) + " out of range");
    out[r] = t[r * cols + idx[r]];
  }
  return g.record("gather", std::move(out), {x},
                  [idx = std::move(idx), cols](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gx = *parents[0];
                    for (std::size_t r = 0; r < idx.size(); ++r) gx[r * cols + idx[r]] += adj[r];
                  });
}

Var softmax(Var x, double temperature) {
  check_temperature(temperature);
  Graph& g = graph_of(x);
  const Tensor& t = x.value();
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  const double inv_t = 1.0 / temperature;
  Tensor out(t.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = t.data().data() + r * cols;
    double* y = out.data().data() + r * cols;
    const double peak = *std::max_element(in, in + cols) * inv_t;
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] * inv_t - peak);
      z += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return g.record("softmax", std::move(out), {x},
                  [rows, cols, inv_t](const Tensor& y, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gx = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t o = r * cols;
                      double dot = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) dot += adj[o + c] * y[o + c];
                      for (std::size_t c = 0; c < cols; ++c) gx[o + c] += inv_t * y[o + c] * (adj[o + c] - dot);
                    }
                  });
}

Var log_softmax(Var x, double temperature) {
  check_temperature(temperature);
  Graph& g = graph_of(x);
  const Tensor& t = x.value();
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  const double inv_t = 1.0 / temperature;
  Tensor out(t.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = t.data().data() + r * cols;
    double* y = out.data().data() + r * cols;
    const double peak = *std::max_element(in, in + cols) * inv_t;
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(in[c] * inv_t - peak);
    const double log_z = peak + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[c] = in[c] * inv_t - log_z;
  }
  return g.record("log_softmax", std::move(out), {x},
                  [rows, cols, inv_t](const Tensor& y, const Tensor& adj, std::span<Tensor* const> parents) {
                    Tensor& gx = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t o = r * cols;
                      double total = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) total += adj[o + c];
                      for (std::size_t c = 0; c < cols; ++c) {
                        gx[o + c] += inv_t * (adj[o + c] - std::exp(y[o + c]) * total);
                      }
                    }
                  });
}

Var poisson_log_pmf(Var rate, std::size_t bins) {
  Graph& g = graph_of(rate);
  const Tensor& f = rate.value();
  if (bins == 0) throw ParameterError("poisson_log_pmf needs at least one bin");
  const std::size_t rows = f.size();
  std::vector<double> log_factorial(bins);
  for (std::size_t j = 0; j < bins; ++j) log_factorial[j] = log_gamma(static_cast<double>(j) + 1.0);
  Tensor out(Shape{rows, bins});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!(f[r] > 0.0)) throw DomainError("Poisson rate must be positive, got " + std::to_string(f[r]));
    const double log_f = std::log(f[r]);
    for (std::size_t j = 0; j < bins; ++j) {
      out[r * bins + j] = static_cast<double>(j) * log_f - f[r] - log_factorial[j];
    }
  }
  return g.record("poisson_log_pmf", std::move(out), {rate},
                  [rate, rows, bins](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    const Tensor& f = rate.value();
                    Tensor& gf = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      double d = 0.0;
                      for (std::size_t j = 0; j < bins; ++j) {
                        d += adj[r * bins + j] * (static_cast<double>(j) / f[r] - 1.0);
                      }
                      gf[r] += d;
                    }
                  });
}

Var ordinal_logits(Var p) {
  Graph& g = graph_of(p);
  const Tensor& t = p.value();
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  for (double v : t.data()) {
    if (!(v > 0.0 && v < 1.0)) throw DomainError("ordinal_logits expects probabilities in (0, 1)");
  }
  Tensor out(t.shape());
  std::vector<double> tail(cols + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pr = t.data().data() + r * cols;
    double* y = out.data().data() + r * cols;
    // tail[j] = sum_{k >= j} log(1 - p_k)
    tail[cols] = 0.0;
    for (std::size_t k = cols; k-- > 0;) tail[k] = tail[k + 1] + std::log1p(-pr[k]);
    double head = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      head += std::log(pr[j]);
      y[j] = head + tail[j + 1];
    }
  }
  return g.record("ordinal_logits", std::move(out), {p},
                  [p, rows, cols](const Tensor&, const Tensor& adj, std::span<Tensor* const> parents) {
                    const Tensor& t = p.value();
                    Tensor& gp = *parents[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      const std::size_t o = r * cols;
                      double total = 0.0;
                      for (std::size_t j = 0; j < cols; ++j) total += adj[o + j];
                      // below = sum_{j < k} adj_j, at_or_above = sum_{j >= k} adj_j
                      double below = 0.0;
                      for (std::size_t k = 0; k < cols; ++k) {
                        const double at_or_above = total - below;
                        gp[o + k] += at_or_above / t[o + k] - below / (1.0 - t[o + k]);
                        below += adj[o + k];
                      }
                    }
                  });
}

}  // namespace upg
