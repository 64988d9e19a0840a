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

#include "upg/heads.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "upg/errors.hpp"
#include "upg/special.hpp"

namespace upg {

namespace {

constexpr std::array<HeadKind, 6> kAllHeads = {HeadKind::gaussian, HeadKind::gaussian_tanh, HeadKind::beta,
                                               HeadKind::gibbs,    HeadKind::ordinal,       HeadKind::unimodal};

const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);
// Beta samples live on (0, 1); keep them off the boundary before taking logs.
constexpr double kBetaEdge = 1e-9;

// Divides by the temperature; a learned temperature stays on the graph.
Var apply_temperature(Var x, const Temperature& temperature) {
  if (const double* fixed = std::get_if<double>(&temperature)) {
    if (!(*fixed > 0.0) || !std::isfinite(*fixed)) {
      throw ParameterError("temperature must be positive, got " + std::to_string(*fixed));
    }
    return *fixed == 1.0 ? x : scale(x, 1.0 / *fixed);
  }
  const Var t = std::get<Var>(temperature);
  if (t.size() != 1) throw DimensionError("learned temperature must be a scalar");
  if (!(t.item() > 0.0)) throw ParameterError("temperature must be positive");
  return div(x, t);
}

std::pair<std::size_t, std::size_t> batch_and_width(Var x, std::string_view head) {
  const Tensor& t = x.value();
  if (t.rank() > 2) throw DimensionError(std::string(head) + ": expected a matrix of head inputs");
  return {t.rows(), t.cols()};
}

double beta_log_density(double a, double alpha, double beta) {
  const double x = std::clamp(0.5 * (a + 1.0), kBetaEdge, 1.0 - kBetaEdge);
  return (alpha - 1.0) * std::log(x) + (beta - 1.0) * std::log1p(-x) + log_gamma(alpha + beta) -
         log_gamma(alpha) - log_gamma(beta) - std::numbers::ln2;
}

}  // namespace

std::string_view to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::gaussian:
      return "gaussian";
    case HeadKind::gaussian_tanh:
      return "gaussian-tanh";
    case HeadKind::beta:
      return "beta";
    case HeadKind::gibbs:
      return "gibbs";
    case HeadKind::ordinal:
      return "ordinal";
    case HeadKind::unimodal:
      return "unimodal";
  }
  return "unknown";
}

HeadKind parse_head_kind(std::string_view name) {
  for (HeadKind kind : kAllHeads) {
    if (name == to_string(kind)) return kind;
  }
  if (name == "gaussian_tanh") return HeadKind::gaussian_tanh;
  throw ParameterError("unknown head kind '" + std::string(name) + "'");
}

bool is_discrete(HeadKind kind) {
  return kind == HeadKind::gibbs || kind == HeadKind::ordinal || kind == HeadKind::unimodal;
}

std::span<const HeadKind> all_head_kinds() { return kAllHeads; }

double HeadConfig::default_temperature(HeadKind kind) {
  switch (kind) {
    case HeadKind::gibbs:
      return 1.5;
    case HeadKind::unimodal:
      return 2.5;
    default:
      return 1.0;
  }
}

void HeadConfig::validate() const {
  if (bins < 1) throw ParameterError("head needs K >= 1 bins");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParameterError("temperature must be positive");
  if (!(temperature_min > 0.0) || temperature_min > temperature_max) {
    throw ParameterError("learned temperature range must satisfy 0 < min <= max");
  }
  if (!(probability_floor > 0.0 && probability_floor < 0.5)) {
    throw ParameterError("probability floor must lie in (0, 0.5)");
  }
}

std::size_t head_input_width(const HeadConfig& config, std::size_t action_dims) {
  switch (config.kind) {
    case HeadKind::gibbs:
    case HeadKind::ordinal:
      return action_dims * config.bins;
    case HeadKind::beta:
      return 2 * action_dims;
    default:
      return action_dims;
  }
}

ActionGrid::ActionGrid(std::size_t dims, std::size_t bins) : dims_(dims), atoms_(bins) {
  if (bins < 1) throw ParameterError("action grid needs K >= 1");
  if (dims < 1) throw ParameterError("action grid needs at least one dimension");
  if (bins == 1) {
    atoms_[0] = 0.0;
    return;
  }
  const double denom = static_cast<double>(bins - 1);
  for (std::size_t j = 0; j < bins; ++j) atoms_[j] = 2.0 * static_cast<double>(j) / denom - 1.0;
}

double ActionGrid::atom(std::size_t j) const {
  if (j >= atoms_.size()) {
    throw IndexError("bin index " + std::to_string(j) + " out of range for K=" + std::to_string(atoms_.size()));
  }
  return atoms_[j];
}

std::vector<double> ActionGrid::decode(std::span<const std::size_t> indices) const {
  if (indices.size() != dims_) {
    throw DimensionError("expected " + std::to_string(dims_) + " bin indices, got " + std::to_string(indices.size()));
  }
  std::vector<double> action(dims_);
  for (std::size_t i = 0; i < dims_; ++i) action[i] = atom(indices[i]);
  return action;
}

double poisson_log_pmf(double rate, std::size_t j) {
  if (!(rate > 0.0)) throw DomainError("Poisson rate must be positive, got " + std::to_string(rate));
  return static_cast<double>(j) * std::log(rate) - rate - log_gamma(static_cast<double>(j) + 1.0);
}

std::pair<Var, Var> ordinal_transform(Var p) {
  const Var logits = ordinal_logits(p);
  return {logits, log_softmax(logits)};
}

DistOutput::DistOutput(Graph* graph, HeadKind kind, std::size_t batch, std::size_t dims, std::size_t bins)
    : graph_(graph), kind_(kind), batch_(batch), dims_(dims), bins_(bins) {}

void DistOutput::finish_discrete(Var logits) {
  log_probs_ = log_softmax(logits);
  probs_ = softmax(logits);
}

Var DistOutput::probs() const {
  if (!probs_) throw ParameterError(std::string(to_string(kind_)) + " head has no probability table");
  return *probs_;
}

Var DistOutput::log_probs() const {
  if (!log_probs_) throw ParameterError(std::string(to_string(kind_)) + " head has no probability table");
  return *log_probs_;
}

std::vector<double> DistOutput::probabilities(std::size_t row, std::size_t dim) const {
  if (row >= batch_ || dim >= dims_) throw IndexError("probabilities: (row, dim) out of range");
  const Tensor& p = probs().value();
  const auto begin = p.data().begin() + static_cast<std::ptrdiff_t>((row * dims_ + dim) * bins_);
  return {begin, begin + static_cast<std::ptrdiff_t>(bins_)};
}

std::size_t DistOutput::check_actions(std::span<const Action> actions) const {
  if (actions.size() != batch_) {
    throw DimensionError("log_prob: " + std::to_string(actions.size()) + " actions for batch of " +
                         std::to_string(batch_));
  }
  for (const Action& a : actions) {
    const std::size_t n = is_discrete(kind_) ? a.indices.size() : a.values.size();
    if (n != dims_) throw DimensionError("log_prob: action has wrong dimensionality");
  }
  return batch_;
}

Var DistOutput::log_prob(std::span<const Action> actions) const {
  check_actions(actions);
  Graph& g = *graph_;
  if (is_discrete(kind_)) {
    std::vector<std::size_t> flat;
    flat.reserve(batch_ * dims_);
    for (const Action& a : actions) flat.insert(flat.end(), a.indices.begin(), a.indices.end());
    const Var picked = gather(*log_probs_, flat);
    return sum_rows(reshape(picked, Shape{batch_, dims_}));
  }
  Tensor values(Shape{batch_, dims_});
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t i = 0; i < dims_; ++i) values[b * dims_ + i] = actions[b].values[i];
  }
  if (kind_ == HeadKind::beta) {
    Tensor log_x(values.shape());
    Tensor log_1mx(values.shape());
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double x = std::clamp(0.5 * (values[k] + 1.0), kBetaEdge, 1.0 - kBetaEdge);
      log_x[k] = std::log(x);
      log_1mx[k] = std::log1p(-x);
    }
    const Var a = *alpha_;
    const Var b = *beta_;
    const Var density = (a - 1.0) * g.constant(std::move(log_x)) + (b - 1.0) * g.constant(std::move(log_1mx)) +
                        lgamma(a + b) - lgamma(a) - lgamma(b);
    return sum_rows(density - std::numbers::ln2);
  }
  const Var z = (g.constant(std::move(values)) - *mean_) / exp(*log_std_);
  return sum_rows(scale(square(z), -0.5) - *log_std_ - kHalfLogTwoPi);
}

Var DistOutput::entropy() const {
  if (is_discrete(kind_)) {
    const Var plogp = sum_rows(*probs_ * *log_probs_);
    return neg(sum_rows(reshape(plogp, Shape{batch_, dims_})));
  }
  if (kind_ == HeadKind::beta) {
    const Var a = *alpha_;
    const Var b = *beta_;
    const Var ab = a + b;
    const Var per_dim = lgamma(a) + lgamma(b) - lgamma(ab) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
                        (ab - 2.0) * digamma(ab);
    return sum_rows(per_dim + std::numbers::ln2);
  }
  return sum_rows(*log_std_ + (kHalfLogTwoPi + 0.5));
}

std::vector<SampledAction> DistOutput::sample(Rng& rng) const {
  std::vector<SampledAction> out(batch_);
  if (is_discrete(kind_)) {
    const ActionGrid grid(dims_, bins_);
    const Tensor& p = probs_->value();
    const Tensor& lp = log_probs_->value();
    for (std::size_t b = 0; b < batch_; ++b) {
      SampledAction& s = out[b];
      s.action.indices.resize(dims_);
      for (std::size_t i = 0; i < dims_; ++i) {
        const std::size_t row = (b * dims_ + i) * bins_;
        const double u = rng.uniform();
        double cumulative = 0.0;
        std::size_t chosen = bins_;
        std::size_t last_positive = 0;
        for (std::size_t j = 0; j < bins_; ++j) {
          if (p[row + j] > 0.0) last_positive = j;
          cumulative += p[row + j];
          if (u < cumulative) {
            chosen = j;
            break;
          }
        }
        if (chosen == bins_) chosen = last_positive;
        s.action.indices[i] = chosen;
        s.log_prob += lp[row + chosen];
      }
      s.action.values = grid.decode(s.action.indices);
    }
    return out;
  }
  if (kind_ == HeadKind::beta) {
    const Tensor& a = alpha_->value();
    const Tensor& bt = beta_->value();
    for (std::size_t b = 0; b < batch_; ++b) {
      SampledAction& s = out[b];
      s.action.values.resize(dims_);
      for (std::size_t i = 0; i < dims_; ++i) {
        const std::size_t k = b * dims_ + i;
        const double x = rng.gamma(a[k]);
        const double y = rng.gamma(bt[k]);
        const double unit = std::clamp(x / (x + y), kBetaEdge, 1.0 - kBetaEdge);
        const double action = 2.0 * unit - 1.0;
        s.action.values[i] = action;
        s.log_prob += beta_log_density(action, a[k], bt[k]);
      }
    }
    return out;
  }
  const Tensor& mu = mean_->value();
  const Tensor& log_sigma = log_std_->value();
  for (std::size_t b = 0; b < batch_; ++b) {
    SampledAction& s = out[b];
    s.action.values.resize(dims_);
    for (std::size_t i = 0; i < dims_; ++i) {
      const std::size_t k = b * dims_ + i;
      const double z = rng.normal();
      s.action.values[i] = mu[k] + std::exp(log_sigma[k]) * z;
      s.log_prob += -0.5 * z * z - log_sigma[k] - kHalfLogTwoPi;
    }
  }
  return out;
}

std::vector<Action> DistOutput::mode() const {
  std::vector<Action> out(batch_);
  if (is_discrete(kind_)) {
    const ActionGrid grid(dims_, bins_);
    const Tensor& p = probs_->value();
    for (std::size_t b = 0; b < batch_; ++b) {
      out[b].indices.resize(dims_);
      for (std::size_t i = 0; i < dims_; ++i) {
        const auto row = p.data().begin() + static_cast<std::ptrdiff_t>((b * dims_ + i) * bins_);
        out[b].indices[i] = static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(bins_)) - row);
      }
      out[b].values = grid.decode(out[b].indices);
    }
    return out;
  }
  for (std::size_t b = 0; b < batch_; ++b) {
    out[b].values.resize(dims_);
    for (std::size_t i = 0; i < dims_; ++i) {
      const std::size_t k = b * dims_ + i;
      if (kind_ == HeadKind::beta) {
        const double a = alpha_->value()[k];
        const double bt = beta_->value()[k];
        out[b].values[i] = 2.0 * a / (a + bt) - 1.0;
      } else {
        out[b].values[i] = mean_->value()[k];
      }
    }
  }
  return out;
}

DistOutput gibbs_head(Var logits, std::size_t dims, std::size_t bins, const Temperature& temperature) {
  const auto [batch, width] = batch_and_width(logits, "gibbs_head");
  if (width != dims * bins) throw DimensionError("gibbs_head: expected m*K logits per state");
  DistOutput out(logits.graph, HeadKind::gibbs, batch, dims, bins);
  const Var rows = reshape(logits, Shape{batch * dims, bins});
  out.finish_discrete(apply_temperature(rows, temperature));
  return out;
}

DistOutput ordinal_head(Var logits, std::size_t dims, std::size_t bins, const Temperature& temperature,
                        double floor) {
  const auto [batch, width] = batch_and_width(logits, "ordinal_head");
  if (width != dims * bins) throw DimensionError("ordinal_head: expected m*K logits per state");
  DistOutput out(logits.graph, HeadKind::ordinal, batch, dims, bins);
  const Var rows = reshape(logits, Shape{batch * dims, bins});
  const Var s = clamp(sigmoid(apply_temperature(rows, temperature)), floor, 1.0 - floor);
  const Var h = ordinal_logits(s);
  out.ordinal_logits_ = h;
  out.finish_discrete(h);
  return out;
}

DistOutput unimodal_head(Var rates, const ActionGrid& grid, const Temperature& temperature, double floor) {
  const auto [batch, width] = batch_and_width(rates, "unimodal_head");
  if (width != grid.dims()) throw DimensionError("unimodal_head: expected one rate per action dimension");
  const std::size_t bins = grid.bins();
  DistOutput out(rates.graph, HeadKind::unimodal, batch, grid.dims(), bins);
  const Var log_pmf = poisson_log_pmf(reshape(rates, Shape{batch * grid.dims()}), bins);
  const Var truncated = softmax(apply_temperature(log_pmf, temperature));
  out.truncated_ = truncated;
  const Var h = ordinal_logits(clamp(truncated, floor, 1.0 - floor));
  out.ordinal_logits_ = h;
  out.finish_discrete(h);
  return out;
}

DistOutput gaussian_head(Var means, Var log_std, bool tanh_mean) {
  const auto [batch, dims] = batch_and_width(means, "gaussian_head");
  if (log_std.size() != dims) throw DimensionError("gaussian_head: log_std must hold one entry per dimension");
  DistOutput out(means.graph, tanh_mean ? HeadKind::gaussian_tanh : HeadKind::gaussian, batch, dims, 0);
  const Var m = reshape(means, Shape{batch, dims});
  out.mean_ = tanh_mean ? tanh(m) : m;
  out.log_std_ = broadcast_rows(log_std, batch);
  return out;
}

DistOutput beta_head(Var raw) {
  const auto [batch, width] = batch_and_width(raw, "beta_head");
  if (width % 2 != 0 || width == 0) throw DimensionError("beta_head: expected 2*m raw outputs per state");
  const std::size_t dims = width / 2;
  DistOutput out(raw.graph, HeadKind::beta, batch, dims, 0);
  const Var r = reshape(raw, Shape{batch, width});
  out.alpha_ = softplus(slice_cols(r, 0, dims)) + 1.0;
  out.beta_ = softplus(slice_cols(r, dims, width)) + 1.0;
  return out;
}

}  // namespace upg
