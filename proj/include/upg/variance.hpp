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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "upg/envs.hpp"
#include "upg/heads.hpp"
#include "upg/network.hpp"
#include "upg/rng.hpp"

namespace upg {

// Policy network for the one-step bandit (observation [1.0], m = 1).
PolicyValueNet bandit_policy(const HeadConfig& head, const std::vector<std::size_t>& hidden = {64, 64});

// One draw of r(a) * grad_theta log pi(a | s) over the policy parameters:
// full forward, sample, env step, backward.
std::vector<double> estimator_sample(const PolicyValueNet& net, Env& bandit, Rng& rng);

/// Per-outcome quantities of a discrete head on the bandit state.
struct OutcomeGradients {
  std::vector<double> probs;               // p-hat(j)
  std::vector<std::vector<double>> grads;  // grad_theta log p-hat(j), one per outcome
  std::vector<double> actions;             // atom of outcome j
};

// K backward passes, one per outcome. Discrete heads with m = 1 only.
OutcomeGradients outcome_gradients(const PolicyValueNet& net);

// Trace of Cov[g-hat] by enumeration: sum_j p_j r_j^2 g_j^2 - (sum_j p_j r_j g_j)^2,
// summed over coordinates. rewards[j] is r(a_j).
double exact_variance(const OutcomeGradients& outcomes, std::span<const double> rewards);
std::vector<double> exact_variance_per_coordinate(const OutcomeGradients& outcomes, std::span<const double> rewards);

struct MonteCarloVariance {
  double variance = 0.0;  // trace of the sample covariance (n - 1 denominator)
  double std_error = 0.0;  // estimated sd of `variance` over repeated runs
  std::vector<double> mean;
};

// n draws j ~ p-hat using the cached per-outcome gradients.
MonteCarloVariance monte_carlo_variance(const OutcomeGradients& outcomes, std::span<const double> rewards,
                                        std::size_t samples, Rng& rng);

struct VarianceConfig {
  std::vector<HeadKind> heads{HeadKind::unimodal, HeadKind::ordinal, HeadKind::gibbs};
  std::vector<std::size_t> bins{9, 11, 15};
  double temperature = 2.5;
  std::size_t inits = 100;
  std::size_t samples = 10000;
  double reward = 1.0;  // constant bandit reward R
  std::uint64_t master_seed = 0;
  std::vector<std::size_t> hidden{64, 64};

  void validate() const;
};

// One CSV row: head,K,tau,init_seed,exact_variance,mc_variance,mc_stderr.
struct VarianceRow {
  HeadKind head = HeadKind::unimodal;
  std::size_t bins = 0;
  double temperature = 0.0;
  std::uint64_t init_seed = 0;
  double exact_variance = 0.0;
  double mc_variance = 0.0;
  double mc_stderr = 0.0;
  double max_uniform_deviation = 0.0;  // max_j |p-hat(j) - 1/K|
};

struct VarianceReport {
  HeadKind head = HeadKind::unimodal;
  std::size_t bins = 0;
  double temperature = 0.0;
  std::size_t inits = 0;
  std::size_t samples = 0;
  double mean_exact = 0.0;  // E_init[V]
  double std_error_exact = 0.0;
  double ci_low = 0.0;  // 95% normal interval on E_init[V]
  double ci_high = 0.0;
  double mean_mc = 0.0;
  double max_uniform_deviation = 0.0;
  double scaling_fit = 0.0;  // c in E_init[V] ~ c (K - 1) / K, fitted per head across K
};

struct VarianceSweep {
  std::vector<VarianceRow> rows;
  std::vector<VarianceReport> reports;
};

// Seed of the trunk used for init draw `index` at K; shared across heads.
std::uint64_t trunk_seed(std::uint64_t master, std::size_t bins, std::size_t index);

VarianceSweep init_variance_sweep(const VarianceConfig& config);

inline constexpr const char* kVarianceCsvHeader = "head,K,tau,init_seed,exact_variance,mc_variance,mc_stderr";
void write_variance_csv(std::ostream& out, std::span<const VarianceRow> rows);

inline constexpr const char* kVarianceSummaryCsvHeader =
    "head,K,tau,inits,samples,mean_exact,stderr_exact,ci_low,ci_high,mean_mc,max_uniform_deviation,scaling_fit";
void write_variance_summary_csv(std::ostream& out, std::span<const VarianceReport> reports);

}  // namespace upg
