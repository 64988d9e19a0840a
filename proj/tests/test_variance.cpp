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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "upg/errors.hpp"
#include "upg/variance.hpp"

namespace upg {
namespace {

HeadConfig discrete(HeadKind kind, std::size_t bins, double tau) {
  HeadConfig h;
  h.kind = kind;
  h.bins = bins;
  h.temperature = tau;
  return h;
}

PolicyValueNet initialized(const HeadConfig& head, std::uint64_t seed, const std::vector<std::size_t>& hidden = {64, 64}) {
  PolicyValueNet net = bandit_policy(head, hidden);
  Rng rng(seed);
  net.init_params(rng);
  return net;
}

double squared_norm(const std::vector<double>& v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

TEST(EstimatorSample, OneHotPolicyGivesZeroGradient) {
  PolicyValueNet net = bandit_policy(discrete(HeadKind::gibbs, 5, 1.0));
  // Zero weights; the output bias makes bin 2 certain.
  std::vector<Tensor>& p = net.parameters();
  const std::size_t out_bias = 2 * net.policy_spec().layer_count() - 1;
  p[out_bias][2] = 1000.0;
  BanditEnv env = constant_bandit(1.0);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    for (double v : estimator_sample(net, env, rng)) EXPECT_EQ(v, 0.0);
  }
}

TEST(EstimatorSample, LengthIsPolicyParameterCount) {
  const PolicyValueNet net = initialized(discrete(HeadKind::unimodal, 11, 2.5), 3);
  BanditEnv env = constant_bandit(1.0);
  Rng rng(4);
  EXPECT_EQ(estimator_sample(net, env, rng).size(), net.policy_parameter_count());
}

// 2e4 draws at constant reward: every coordinate's mean is within 3 standard errors of 0.
class Unbiased : public ::testing::TestWithParam<HeadKind> {};

TEST_P(Unbiased, ConstantRewardMeanIsZero) {
  HeadConfig head = discrete(GetParam(), 11, HeadConfig::default_temperature(GetParam()));
  const PolicyValueNet net = initialized(head, 5);
  BanditEnv env = constant_bandit(1.0);
  Rng rng(6);
  const std::size_t n = 20000;
  std::vector<double> sum(net.policy_parameter_count(), 0.0);
  std::vector<double> sum_sq(sum.size(), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const std::vector<double> g = estimator_sample(net, env, rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      sum[i] += g[i];
      sum_sq[i] += g[i] * g[i];
    }
  }
  double max_z = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / n;
    const double var = sum_sq[i] / n - mean * mean;
    if (var > 1e-30) max_z = std::max(max_z, std::abs(mean) / std::sqrt(var / n));
  }
  EXPECT_LT(max_z, 3.0);
}

INSTANTIATE_TEST_SUITE_P(UnimodalAndGaussian, Unbiased, ::testing::Values(HeadKind::unimodal, HeadKind::gaussian),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(ExactVariance, LinearSoftmaxTwoBinsClosedForm) {
  // No hidden layers: logits = W * 1 + b, so d log p(j) / d(w_k) = d log p(j) / d(b_k) = (delta_jk - p_k) / tau.
  for (double tau : {0.7, 1.5}) {
    const PolicyValueNet net = initialized(discrete(HeadKind::gibbs, 2, tau), 7, {});
    const OutcomeGradients o = outcome_gradients(net);
    const double p0 = o.probs[0];
    const double p1 = o.probs[1];
    const std::vector<double> r{1.0, 1.0};
    EXPECT_NEAR(exact_variance(o, r), 4.0 * p0 * p1 / (tau * tau), 1e-15);
    // Non-constant reward, enumerated by hand over both outcomes.
    const std::vector<double> r2{2.0, -1.0};
    double expected = 0.0;
    for (int coord = 0; coord < 2; ++coord) {  // w_0 and b_0 behave the same; w_1, b_1 mirror them
      const double g0 = (1.0 - p0) / tau;
      const double g1 = (0.0 - p0) / tau;
      const double m = p0 * 2.0 * g0 + p1 * -1.0 * g1;
      const double s = p0 * 4.0 * g0 * g0 + p1 * g1 * g1;
      expected += 2.0 * (s - m * m);
    }
    EXPECT_NEAR(exact_variance(o, r2), expected, 1e-14);
  }
}

TEST(ExactVariance, MonteCarloAgreesOnLinearSoftmax) {
  const PolicyValueNet net = initialized(discrete(HeadKind::gibbs, 2, 1.0), 8, {});
  const OutcomeGradients o = outcome_gradients(net);
  const std::vector<double> r{1.0, 1.0};
  Rng rng(9);
  const MonteCarloVariance mc = monte_carlo_variance(o, r, 100000, rng);
  EXPECT_LT(std::abs(mc.variance - exact_variance(o, r)), 3.0 * mc.std_error);
}

TEST(ExactVariance, UniformPolicyMatchesMeanSquaredGradient) {
  const double reward = 1.7;
  for (std::size_t k : {3u, 9u, 11u}) {
    // All-zero weights: gibbs is exactly uniform and the per-outcome gradients sum to zero.
    const PolicyValueNet net = bandit_policy(discrete(HeadKind::gibbs, k, 1.5));
    const OutcomeGradients o = outcome_gradients(net);
    double total = 0.0;
    for (const auto& g : o.grads) total += squared_norm(g);
    const std::vector<double> r(k, reward);
    EXPECT_NEAR(exact_variance(o, r), reward * reward * total / static_cast<double>(k), 1e-12);
  }
}

TEST(ExactVariance, RewardScalingIsQuadratic) {
  Rng rng(10);
  for (HeadKind kind : {HeadKind::gibbs, HeadKind::ordinal, HeadKind::unimodal}) {
    const PolicyValueNet net = initialized(discrete(kind, 9, 2.5), 11);
    const OutcomeGradients o = outcome_gradients(net);
    std::vector<double> r(9);
    for (double& v : r) v = rng.uniform(-2, 2);
    const double base = exact_variance(o, r);
    for (double c : {0.5, 3.0, -2.0}) {
      std::vector<double> scaled(r);
      for (double& v : scaled) v *= c;
      EXPECT_NEAR(exact_variance(o, scaled), c * c * base, 1e-9 * c * c * base);
    }
  }
}

TEST(ExactVariance, NonNegativePerCoordinate) {
  const PolicyValueNet net = initialized(discrete(HeadKind::ordinal, 11, 2.5), 12);
  const OutcomeGradients o = outcome_gradients(net);
  for (double v : exact_variance_per_coordinate(o, std::vector<double>(11, 1.0))) EXPECT_GE(v, 0.0);
}

TEST(ExactVariance, RejectsContinuousHeads) {
  HeadConfig h;
  h.kind = HeadKind::gaussian;
  EXPECT_THROW(outcome_gradients(bandit_policy(h)), ParameterError);
}

class NearUniformAtInit : public ::testing::TestWithParam<HeadKind> {};

TEST_P(NearUniformAtInit, MaxDeviationBelowPointFifteen) {
  for (std::size_t k : {9u, 11u, 15u}) {
    double dev = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const PolicyValueNet net = initialized(discrete(GetParam(), k, 2.5), seed);
      for (double p : outcome_gradients(net).probs) dev = std::max(dev, std::abs(p - 1.0 / static_cast<double>(k)));
    }
    EXPECT_LT(dev, 0.15) << to_string(GetParam()) << " K=" << k;
  }
}

INSTANTIATE_TEST_SUITE_P(DiscreteHeads, NearUniformAtInit,
                         ::testing::Values(HeadKind::gibbs, HeadKind::ordinal, HeadKind::unimodal),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Sweep, RowsReportsAndMatchedTrunks) {
  VarianceConfig cfg;
  cfg.heads = {HeadKind::unimodal, HeadKind::ordinal};
  cfg.bins = {3, 5};
  cfg.inits = 4;
  cfg.samples = 500;
  const VarianceSweep s = init_variance_sweep(cfg);
  EXPECT_EQ(s.rows.size(), 2u * 2u * 4u);
  EXPECT_EQ(s.reports.size(), 4u);
  for (const VarianceReport& r : s.reports) {
    EXPECT_GE(r.mean_exact, 0.0);
    EXPECT_LE(r.ci_low, r.mean_exact);
    EXPECT_GE(r.ci_high, r.mean_exact);
  }
  // Same (K, init) seed for both heads, and identical hidden layers.
  EXPECT_EQ(s.rows[0].init_seed, s.rows[8].init_seed);
  PolicyValueNet a = initialized(discrete(HeadKind::unimodal, 3, 2.5), s.rows[0].init_seed);
  PolicyValueNet b = initialized(discrete(HeadKind::ordinal, 3, 2.5), s.rows[0].init_seed);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.parameters()[i].values(), b.parameters()[i].values());

  const VarianceSweep again = init_variance_sweep(cfg);
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    EXPECT_EQ(s.rows[i].exact_variance, again.rows[i].exact_variance);
    EXPECT_EQ(s.rows[i].mc_variance, again.rows[i].mc_variance);
  }
}

TEST(Sweep, ScalingFitIsLeastSquaresThroughOrigin) {
  VarianceConfig cfg;
  cfg.heads = {HeadKind::gibbs};
  cfg.bins = {2, 4, 8};
  cfg.inits = 3;
  cfg.samples = 100;
  const VarianceSweep s = init_variance_sweep(cfg);
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& r : s.reports) {
    const double x = (static_cast<double>(r.bins) - 1.0) / static_cast<double>(r.bins);
    sxy += x * r.mean_exact;
    sxx += x * x;
  }
  for (const auto& r : s.reports) EXPECT_NEAR(r.scaling_fit, sxy / sxx, 1e-12);
}

TEST(Sweep, ConfigValidationListsProblems) {
  VarianceConfig cfg;
  cfg.inits = 1;
  cfg.heads = {HeadKind::gaussian};
  try {
    init_variance_sweep(cfg);
    FAIL();
  } catch (const ParameterError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("inits"), std::string::npos);
    EXPECT_NE(msg.find("gaussian"), std::string::npos);
  }
}

TEST(Sweep, CsvSchema) {
  VarianceConfig cfg;
  cfg.heads = {HeadKind::unimodal};
  cfg.bins = {3};
  cfg.inits = 2;
  cfg.samples = 10;
  const VarianceSweep s = init_variance_sweep(cfg);
  std::ostringstream out;
  write_variance_csv(out, s.rows);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "head,K,tau,init_seed,exact_variance,mc_variance,mc_stderr");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
    EXPECT_EQ(line.rfind("unimodal,3,2.5,", 0), 0u);
    ++rows;
  }
  EXPECT_EQ(rows, 2);
}

}  // namespace
}  // namespace upg
