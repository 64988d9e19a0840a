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
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fd_oracle.hpp"
#include "upg/errors.hpp"
#include "upg/network.hpp"

namespace upg {
namespace {

using testing::central_difference;
using testing::random_tensor;
using testing::relative_error;

NetworkConfig make_config(HeadKind kind, std::size_t obs, std::size_t dims, std::size_t bins = 11) {
  NetworkConfig c;
  c.observation_dim = obs;
  c.action_dims = dims;
  c.head.kind = kind;
  c.head.bins = bins;
  c.head.temperature = HeadConfig::default_temperature(kind);
  return c;
}

TEST(PolicyNetwork, ZeroWeightsUnimodalRateIsSoftplusZero) {
  const PolicyValueNet net(make_config(HeadKind::unimodal, 3, 2));
  Graph g;
  const NetBinding b = bind(g, net);
  const DistOutput d = forward_policy(net, b, g.constant(Tensor(Shape{4, 3}, std::vector<double>(12, 0.7))));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t i = 0; i < 2; ++i) {
      const Tensor& t = d.truncated()->value();
      const std::size_t row = r * 2 + i;
      std::size_t best = 0;
      for (std::size_t j = 1; j < 11; ++j) {
        if (t.at(row, j) > t.at(row, best)) best = j;
      }
      EXPECT_EQ(best, 0u);
    }
  }
  // f = softplus(0) = ln 2 ≈ 0.6931
  const double f = std::numbers::ln2;
  EXPECT_NEAR(f, 0.6931, 1e-4);
  const Tensor& t = d.truncated()->value();
  const double ratio = t.at(0, 1) / t.at(0, 0);
  EXPECT_NEAR(std::log(ratio), std::log(f) / 2.5, 1e-10);
}

TEST(PolicyNetwork, ZeroWeightsGibbsUniform) {
  const PolicyValueNet net(make_config(HeadKind::gibbs, 3, 2));
  Graph g;
  const DistOutput d = forward_policy(net, bind(g, net), g.constant(Tensor(Shape{2, 3}, {1, 2, 3, -1, -2, -3})));
  for (double p : d.probs().value().data()) EXPECT_NEAR(p, 1.0 / 11.0, 1e-15);
}

TEST(PolicyNetwork, OutputLayerParameterCounts) {
  const PolicyValueNet uni(make_config(HeadKind::unimodal, 17, 6));
  const PolicyValueNet gibbs(make_config(HeadKind::gibbs, 17, 6));
  const MlpSpec us = uni.policy_spec();
  const MlpSpec gs = gibbs.policy_spec();
  EXPECT_EQ(us.layer_parameter_count(us.layer_count() - 1), 64u * 6u + 6u);
  EXPECT_EQ(gs.layer_parameter_count(gs.layer_count() - 1), 64u * 66u + 66u);
}

TEST(PolicyNetwork, ParameterCountMatchesAnalyticCount) {
  for (HeadKind kind : all_head_kinds()) {
    for (std::size_t dims : {1u, 2u, 6u}) {
      for (bool learned : {false, true}) {
        NetworkConfig c = make_config(kind, 5, dims, 9);
        c.head.learned_temperature = learned && (kind == HeadKind::gibbs || kind == HeadKind::unimodal);
        const PolicyValueNet net(c);
        const std::size_t width = head_input_width(c.head, dims);
        const std::size_t policy = 5 * 64 + 64 + 64 * 64 + 64 + 64 * width + width;
        const std::size_t value = 5 * 64 + 64 + 64 * 64 + 64 + 64 + 1;
        std::size_t extras = 0;
        if (kind == HeadKind::gaussian || kind == HeadKind::gaussian_tanh) extras += dims;
        if (c.head.learned_temperature) extras += 1;
        EXPECT_EQ(net.parameter_count(), policy + extras + value) << to_string(kind);
        EXPECT_EQ(net.policy_parameter_count(), policy + extras);
        EXPECT_EQ(net.flat_parameters().size(), net.parameter_count());
      }
    }
  }
}

TEST(PolicyNetwork, StateWidthMismatchIsShapeError) {
  const PolicyValueNet net(make_config(HeadKind::unimodal, 3, 1));
  Graph g;
  const NetBinding b = bind(g, net);
  EXPECT_THROW(forward_policy(net, b, g.constant(Tensor(Shape{1, 4}))), DimensionError);
  EXPECT_THROW(forward_value(net, b, g.constant(Tensor(Shape{1, 2}))), DimensionError);
}

TEST(PolicyNetwork, SoftplusRatesArePositive) {
  Rng rng(3);
  NetworkConfig c = make_config(HeadKind::unimodal, 4, 3);
  PolicyValueNet net(c);
  InitGains big;
  big.policy_output = 30.0;
  net.init_params(rng, big);
  Graph g;
  const DistOutput d = forward_policy(net, bind(g, net), g.constant(random_tensor({64, 4}, rng, -5, 5)));
  double total = 0.0;
  for (double p : d.probs().value().data()) total += p;
  EXPECT_NEAR(total, 64.0 * 3.0, 1e-8);
}

TEST(ValueNetwork, ZeroWeightsGiveZero) {
  const PolicyValueNet net(make_config(HeadKind::gaussian, 3, 1));
  Graph g;
  const Var v = forward_value(net, bind(g, net), g.constant(Tensor(Shape{5, 3}, std::vector<double>(15, 1.0))));
  EXPECT_EQ(v.shape(), (Shape{5}));
  for (double x : v.value().data()) EXPECT_EQ(x, 0.0);
}

TEST(ValueNetwork, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  PolicyValueNet net(make_config(HeadKind::unimodal, 3, 1));
  net.init_params(rng);
  const Tensor states = random_tensor({6, 3}, rng, -1, 1);
  const Tensor targets = random_tensor({6}, rng, -1, 1);
  Graph g;
  const NetBinding b = bind(g, net, BindParts::value);
  g.backward(mean(square(forward_value(net, b, g.constant(states)) - g.constant(targets))));
  const std::vector<double> analytic = collect_gradients(g, b, net);

  std::vector<Tensor> inputs = net.parameters();
  auto f = [&](const std::vector<Tensor>& params) {
    PolicyValueNet copy = net;
    copy.parameters() = params;
    Graph h;
    const NetBinding hb = bind(h, copy, BindParts::value);
    return mean(square(forward_value(copy, hb, h.constant(states)) - h.constant(targets))).item();
  };
  std::size_t offset = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i >= net.policy_tensor_count()) {
      for (std::size_t k = 0; k < inputs[i].size(); k += 7) {
        EXPECT_LT(relative_error(analytic[offset + k], central_difference(f, inputs, i, k)), 1e-5) << i << ":" << k;
      }
    } else {
      for (std::size_t k = 0; k < inputs[i].size(); ++k) EXPECT_EQ(analytic[offset + k], 0.0);
    }
    offset += inputs[i].size();
  }
}

TEST(ValueNetwork, BatchedEqualsPerState) {
  Rng rng(21);
  PolicyValueNet net(make_config(HeadKind::beta, 4, 2));
  net.init_params(rng);
  const Tensor states = random_tensor({7, 4}, rng, -2, 2);
  Graph g;
  const NetBinding b = bind(g, net);
  const Tensor batched = forward_value(net, b, g.constant(states)).value();
  const DistOutput d = forward_policy(net, b, g.constant(states));
  for (std::size_t r = 0; r < 7; ++r) {
    Tensor one(Shape{1, 4});
    for (std::size_t c = 0; c < 4; ++c) one[c] = states.at(r, c);
    Graph h;
    const NetBinding hb = bind(h, net);
    EXPECT_NEAR(forward_value(net, hb, h.constant(one)).item(), batched[r], 1e-12);
    const DistOutput od = forward_policy(net, hb, h.constant(one));
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(od.alpha()->value()[i], d.alpha()->value()[r * 2 + i], 1e-12);
      EXPECT_NEAR(od.beta()->value()[i], d.beta()->value()[r * 2 + i], 1e-12);
    }
  }
}

TEST(Init, BiasesZeroAndWeightsOrthogonal) {
  Rng rng(5);
  NetworkConfig c = make_config(HeadKind::gibbs, 64, 1, 64);
  c.policy_hidden = {64, 64};
  PolicyValueNet net(c);
  net.init_params(rng);
  const auto& p = net.parameters();
  const std::vector<double> gains{std::sqrt(2.0), std::sqrt(2.0), 0.01};
  for (std::size_t layer = 0; layer < 3; ++layer) {
    for (double v : p[2 * layer + 1].data()) EXPECT_EQ(v, 0.0);
    const Tensor& w = p[2 * layer];
    ASSERT_EQ(w.rows(), 64u);
    ASSERT_EQ(w.cols(), 64u);
    const double c2 = gains[layer] * gains[layer];
    for (std::size_t i = 0; i < 64; ++i) {
      for (std::size_t j = 0; j < 64; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < 64; ++k) dot += w.at(k, i) * w.at(k, j);
        EXPECT_NEAR(dot, i == j ? c2 : 0.0, 1e-6);
      }
    }
  }
}

TEST(Init, RectangularIsSemiOrthogonal) {
  Rng rng(6);
  const Tensor tall = orthogonal_matrix(10, 4, 2.0, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 10; ++k) dot += tall.at(k, i) * tall.at(k, j);
      EXPECT_NEAR(dot, i == j ? 4.0 : 0.0, 1e-10);
    }
  }
  const Tensor wide = orthogonal_matrix(3, 8, 1.0, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 8; ++k) dot += wide.at(i, k) * wide.at(j, k);
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-10);
    }
  }
}

TEST(Init, SameSeedIsBitIdentical) {
  const NetworkConfig c = make_config(HeadKind::gaussian_tanh, 3, 2);
  PolicyValueNet a(c);
  PolicyValueNet b(c);
  Rng ra(42);
  Rng rb(42);
  a.init_params(ra);
  b.init_params(rb);
  EXPECT_EQ(a.flat_parameters(), b.flat_parameters());
  PolicyValueNet other(c);
  Rng rc(43);
  other.init_params(rc);
  EXPECT_NE(a.flat_parameters(), other.flat_parameters());
}

TEST(Init, LearnedTemperatureStartsAtConfiguredValue) {
  NetworkConfig c = make_config(HeadKind::unimodal, 2, 1);
  c.head.learned_temperature = true;
  c.head.temperature = 2.2;
  PolicyValueNet net(c);
  Rng rng(1);
  net.init_params(rng);
  Graph g;
  const DistOutput d = forward_policy(net, bind(g, net), g.constant(Tensor(Shape{1, 2})));
  // Zero input gives f = ln 2, and log(p1 / p0) = log(f) / tau on the truncated Poisson.
  const Tensor& t = d.truncated()->value();
  EXPECT_NEAR(std::log(t.at(0, 1) / t.at(0, 0)), std::log(std::numbers::ln2) / 2.2, 1e-10);
}

TEST(Checkpoint, RoundTripAndHashMismatch) {
  const auto dir = std::filesystem::temp_directory_path() / "upg_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.bin";
  Rng rng(9);
  PolicyValueNet net(make_config(HeadKind::unimodal, 3, 2));
  net.init_params(rng);
  save_checkpoint(net, path);
  PolicyValueNet loaded(make_config(HeadKind::unimodal, 3, 2));
  load_checkpoint(loaded, path);
  EXPECT_EQ(loaded.flat_parameters(), net.flat_parameters());

  PolicyValueNet wrong(make_config(HeadKind::gibbs, 3, 2));
  EXPECT_THROW(load_checkpoint(wrong, path), Error);
  EXPECT_NE(wrong.spec_hash(), net.spec_hash());

  std::ofstream(dir / "junk.bin", std::ios::binary) << "nope";
  EXPECT_THROW(load_checkpoint(loaded, dir / "junk.bin"), Error);
  EXPECT_THROW(load_checkpoint(loaded, dir / "missing.bin"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace upg
