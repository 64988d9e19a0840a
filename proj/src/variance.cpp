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

#include "upg/variance.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "upg/errors.hpp"

namespace upg {
namespace {

std::vector<double> policy_part(std::vector<double> flat, const PolicyValueNet& net) {
  flat.resize(net.policy_parameter_count());
  return flat;
}

const Tensor& bandit_state() {
  static const Tensor state(Shape{1, 1}, std::vector<double>{1.0});
  return state;
}

}  // namespace

PolicyValueNet bandit_policy(const HeadConfig& head, const std::vector<std::size_t>& hidden) {
  NetworkConfig c;
  c.observation_dim = 1;
  c.action_dims = 1;
  c.head = head;
  c.policy_hidden = hidden;
  c.value_hidden = hidden;
  return PolicyValueNet(c);
}

std::vector<double> estimator_sample(const PolicyValueNet& net, Env& bandit, Rng& rng) {
  const std::vector<double> obs = bandit.reset(rng);
  Graph g;
  const NetBinding binding = bind(g, net, BindParts::policy);
  const DistOutput dist = forward_policy(net, binding, g.constant(Tensor(Shape{1, obs.size()}, obs)));
  const SampledAction sampled = dist.sample(rng).front();
  const double reward = bandit.step(sampled.action.values).reward;
  g.backward(sum(dist.log_prob(std::span<const Action>(&sampled.action, 1))));
  std::vector<double> grad = policy_part(collect_gradients(g, binding, net), net);
  for (double& v : grad) v *= reward;
  return grad;
}

OutcomeGradients outcome_gradients(const PolicyValueNet& net) {
  const HeadConfig& head = net.head();
  if (!is_discrete(head.kind)) throw ParameterError("outcome enumeration needs a discrete head");
  if (net.config().action_dims != 1 || net.config().observation_dim != 1) {
    throw DimensionError("outcome enumeration expects the one-dimensional bandit network");
  }
  Graph g;
  const NetBinding binding = bind(g, net, BindParts::policy);
  const DistOutput dist = forward_policy(net, binding, g.constant(bandit_state()));
  const ActionGrid grid(1, head.bins);
  OutcomeGradients out;
  out.probs = dist.probabilities(0, 0);
  for (std::size_t j = 0; j < head.bins; ++j) {
    g.zero_grad();
    const Action action{{j}, {grid.atom(j)}};
    g.backward(sum(dist.log_prob(std::span<const Action>(&action, 1))));
    out.grads.push_back(policy_part(collect_gradients(g, binding, net), net));
    out.actions.push_back(grid.atom(j));
  }
  return out;
}

std::vector<double> exact_variance_per_coordinate(const OutcomeGradients& outcomes, std::span<const double> rewards) {
  const std::size_t k = outcomes.probs.size();
  if (rewards.size() != k) throw DimensionError("one reward per outcome expected");
  const std::size_t n = outcomes.grads.front().size();
  std::vector<double> first(n, 0.0);
  std::vector<double> second(n, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double p = outcomes.probs[j];
    const double r = rewards[j];
    const std::vector<double>& gj = outcomes.grads[j];
    for (std::size_t c = 0; c < n; ++c) {
      const double v = r * gj[c];
      first[c] += p * v;
      second[c] += p * v * v;
    }
  }
  std::vector<double> var(n);
  for (std::size_t c = 0; c < n; ++c) var[c] = std::max(0.0, second[c] - first[c] * first[c]);
  return var;
}

double exact_variance(const OutcomeGradients& outcomes, std::span<const double> rewards) {
  const std::vector<double> v = exact_variance_per_coordinate(outcomes, rewards);
  return std::accumulate(v.begin(), v.end(), 0.0);
}

MonteCarloVariance monte_carlo_variance(const OutcomeGradients& outcomes, std::span<const double> rewards,
                                        std::size_t samples, Rng& rng) {
  if (samples < 2) throw ParameterError("Monte-Carlo variance needs at least two samples");
  const std::size_t k = outcomes.probs.size();
  if (rewards.size() != k) throw DimensionError("one reward per outcome expected");
  std::vector<double> counts(k, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t chosen = k - 1;
    for (std::size_t j = 0; j < k; ++j) {
      cumulative += outcomes.probs[j];
      if (u < cumulative) {
        chosen = j;
        break;
      }
    }
    counts[chosen] += 1.0;
  }
  const double n = static_cast<double>(samples);
  const std::size_t dim = outcomes.grads.front().size();
  MonteCarloVariance out;
  out.mean.assign(dim, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0.0) continue;
    for (std::size_t c = 0; c < dim; ++c) out.mean[c] += counts[j] * rewards[j] * outcomes.grads[j][c] / n;
  }
  // Deviation of each outcome's estimate from the sample mean.
  std::vector<std::vector<double>> dev(k);
  std::vector<double> sq(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0.0) continue;
    dev[j].resize(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      dev[j][c] = rewards[j] * outcomes.grads[j][c] - out.mean[c];
      sq[j] += dev[j][c] * dev[j][c];
    }
  }
  double m2 = 0.0;  // tr(Sigma), n denominator
  double m4 = 0.0;  // mean ||d||^4
  for (std::size_t j = 0; j < k; ++j) {
    m2 += counts[j] * sq[j] / n;
    m4 += counts[j] * sq[j] * sq[j] / n;
  }
  // tr(Sigma^2) = sum_jl w_j w_l (d_j . d_l)^2
  double tr_sigma2 = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0.0) continue;
    for (std::size_t l = j; l < k; ++l) {
      if (counts[l] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) dot += dev[j][c] * dev[l][c];
      tr_sigma2 += (l == j ? 1.0 : 2.0) * (counts[j] / n) * (counts[l] / n) * dot * dot;
    }
  }
  out.variance = m2 * n / (n - 1.0);
  // Var[tr S] = (E||d||^4 - tr(Sigma)^2) / n + 2 tr(Sigma^2) / (n (n - 1))
  const double var_of_trace = std::max(0.0, m4 - m2 * m2) / n + 2.0 * tr_sigma2 / (n * (n - 1.0));
  out.std_error = std::sqrt(var_of_trace);
  return out;
}

void VarianceConfig::validate() const {
  std::vector<std::string> problems;
  if (heads.empty()) problems.emplace_back("at least one head is required");
  for (HeadKind h : heads) {
    if (!is_discrete(h)) problems.push_back(fmt::format("head '{}' is not discrete", to_string(h)));
  }
  if (bins.empty()) problems.emplace_back("at least one K is required");
  for (std::size_t k : bins) {
    if (k < 1 || k > 101) problems.push_back(fmt::format("K must be in [1, 101], got {}", k));
  }
  if (!(temperature > 0.0)) problems.push_back(fmt::format("tau must be positive, got {}", temperature));
  if (inits < 2) problems.push_back(fmt::format("inits must be at least 2, got {}", inits));
  if (samples < 2) problems.push_back(fmt::format("samples must be at least 2, got {}", samples));
  if (!problems.empty()) {
    std::string msg = "invalid variance config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ParameterError(msg);
  }
}

std::uint64_t trunk_seed(std::uint64_t master, std::size_t bins, std::size_t index) {
  return mix_seed(mix_seed(master, bins), index);
}

VarianceSweep init_variance_sweep(const VarianceConfig& config) {
  config.validate();
  VarianceSweep sweep;
  for (HeadKind kind : config.heads) {
    for (std::size_t k : config.bins) {
      HeadConfig head;
      head.kind = kind;
      head.bins = k;
      head.temperature = config.temperature;
      const std::vector<double> rewards(k, config.reward);

      VarianceReport report;
      report.head = kind;
      report.bins = k;
      report.temperature = config.temperature;
      report.inits = config.inits;
      report.samples = config.samples;
      std::vector<double> exact;
      for (std::size_t i = 0; i < config.inits; ++i) {
        const std::uint64_t seed = trunk_seed(config.master_seed, k, i);
        PolicyValueNet net = bandit_policy(head, config.hidden);
        Rng init_rng(seed);
        net.init_params(init_rng);
        const OutcomeGradients outcomes = outcome_gradients(net);
        Rng mc_rng(mix_seed(seed, static_cast<std::uint64_t>(kind) + 1));
        const MonteCarloVariance mc = monte_carlo_variance(outcomes, rewards, config.samples, mc_rng);

        VarianceRow row;
        row.head = kind;
        row.bins = k;
        row.temperature = config.temperature;
        row.init_seed = seed;
        row.exact_variance = exact_variance(outcomes, rewards);
        row.mc_variance = mc.variance;
        row.mc_stderr = mc.std_error;
        for (double p : outcomes.probs) {
          row.max_uniform_deviation = std::max(row.max_uniform_deviation, std::abs(p - 1.0 / static_cast<double>(k)));
        }
        report.max_uniform_deviation = std::max(report.max_uniform_deviation, row.max_uniform_deviation);
        report.mean_mc += row.mc_variance / static_cast<double>(config.inits);
        exact.push_back(row.exact_variance);
        sweep.rows.push_back(row);
      }
      const double n = static_cast<double>(exact.size());
      report.mean_exact = std::accumulate(exact.begin(), exact.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : exact) ss += (v - report.mean_exact) * (v - report.mean_exact);
      report.std_error_exact = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      report.ci_low = report.mean_exact - 1.96 * report.std_error_exact;
      report.ci_high = report.mean_exact + 1.96 * report.std_error_exact;
      sweep.reports.push_back(report);
    }
  }
  // Least-squares c through the origin per head: E_init[V] ~ c (K - 1) / K.
  for (HeadKind kind : config.heads) {
    double sxy = 0.0;
    double sxx = 0.0;
    for (const VarianceReport& r : sweep.reports) {
      if (r.head != kind) continue;
      const double x = (static_cast<double>(r.bins) - 1.0) / static_cast<double>(r.bins);
      sxy += x * r.mean_exact;
      sxx += x * x;
    }
    for (VarianceReport& r : sweep.reports) {
      if (r.head == kind) r.scaling_fit = sxx > 0.0 ? sxy / sxx : 0.0;
    }
  }
  return sweep;
}

void write_variance_csv(std::ostream& out, std::span<const VarianceRow> rows) {
  out << kVarianceCsvHeader << '\n';
  for (const VarianceRow& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", to_string(r.head), r.bins, r.temperature, r.init_seed,
                       r.exact_variance, r.mc_variance, r.mc_stderr);
  }
}

void write_variance_summary_csv(std::ostream& out, std::span<const VarianceReport> reports) {
  out << kVarianceSummaryCsvHeader << '\n';
  for (const VarianceReport& r : reports) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(r.head), r.bins, r.temperature, r.inits,
                       r.samples, r.mean_exact, r.std_error_exact, r.ci_low, r.ci_high, r.mean_mc,
                       r.max_uniform_deviation, r.scaling_fit);
  }
}

}  // namespace upg
