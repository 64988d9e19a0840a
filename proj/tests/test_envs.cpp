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
#include <numbers>

#include "upg/envs.hpp"
#include "upg/errors.hpp"

namespace upg {
namespace {

TEST(Bandit, ConstantRewardForEveryAction) {
  BanditEnv env = constant_bandit(1.0);
  Rng rng(1);
  for (double a : {-1.0, -0.3, 0.0, 0.8, 1.0, 5.0}) {
    EXPECT_EQ(env.reset(rng), (std::vector<double>{1.0}));
    const StepResult r = env.step(std::vector<double>{a});
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_TRUE(r.terminal);
    EXPECT_TRUE(env.done());
  }
}

TEST(Bandit, ShapedReward) {
  BanditEnv env = quadratic_bandit(0.5);
  Rng rng(1);
  env.reset(rng);
  EXPECT_EQ(env.step(std::vector<double>{0.5}).reward, 0.0);
  env.reset(rng);
  EXPECT_DOUBLE_EQ(env.step(std::vector<double>{-1.0}).reward, -2.25);
  EXPECT_DOUBLE_EQ(env.reward_range().lo, -2.25);
}

TEST(Bandit, EpisodeLengthIsOne) {
  BanditEnv env = quadratic_bandit(0.5);
  Rng rng(2);
  env.reset(rng);
  env.step(std::vector<double>{0.1});
  EXPECT_EQ(env.steps(), 1u);
  EXPECT_THROW(env.step(std::vector<double>{0.1}), StateError);
}

TEST(PointMass, AtGoalWithZeroActionGivesZero) {
  PointMassEnv env(2);
  Rng rng(3);
  env.reset(rng);
  env.set_state(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(env.step(std::vector<double>{0.0, 0.0}).reward, 0.0);
}

TEST(PointMass, HandIntegratedStep) {
  PointMassEnv env(2);
  Rng rng(3);
  env.reset(rng);
  env.set_state(std::vector<double>{0.5, -1.0}, std::vector<double>{0.2, 0.0});
  const StepResult r = env.step(std::vector<double>{1.0, -0.5});
  // vel' = vel + 0.1 a = (0.3, -0.05); pos' = pos + 0.1 vel' = (0.53, -1.005)
  EXPECT_NEAR(r.observation[2], 0.3, 1e-15);
  EXPECT_NEAR(r.observation[3], -0.05, 1e-15);
  EXPECT_NEAR(r.observation[0], 0.53, 1e-15);
  EXPECT_NEAR(r.observation[1], -1.005, 1e-15);
  EXPECT_NEAR(r.reward, -(0.53 * 0.53 + 1.005 * 1.005) - 0.01 * (1.0 + 0.25), 1e-14);
}

TEST(PointMass, ActionsAreClipped) {
  PointMassEnv a(1);
  PointMassEnv b(1);
  Rng ra(4);
  Rng rb(4);
  a.reset(ra);
  b.reset(rb);
  const StepResult big = a.step(std::vector<double>{7.0});
  const StepResult one = b.step(std::vector<double>{1.0});
  EXPECT_EQ(big.observation, one.observation);
  EXPECT_EQ(big.reward, one.reward);
}

TEST(PointMass, HorizonTruncates) {
  PointMassEnv env(3);
  Rng rng(5);
  env.reset(rng);
  StepResult r;
  for (std::size_t t = 0; t < 64; ++t) {
    EXPECT_FALSE(env.done());
    r = env.step(std::vector<double>{0.3, -0.2, 1.0});
    EXPECT_FALSE(r.terminal);
  }
  EXPECT_TRUE(r.truncated);
  EXPECT_THROW(env.step(std::vector<double>{0.0, 0.0, 0.0}), StateError);
  env.reset(rng);
  EXPECT_THROW(env.step(std::vector<double>{0.0}), DimensionError);
}

TEST(Pendulum, UprightAtRestIsZeroReward) {
  PendulumEnv env;
  Rng rng(6);
  env.reset(rng);
  env.set_state(0.0, 0.0);
  EXPECT_EQ(env.step(std::vector<double>{0.0}).reward, 0.0);
}

TEST(Pendulum, ObservationOnUnitCircle) {
  PendulumEnv env;
  Rng rng(7);
  std::vector<double> obs = env.reset(rng);
  for (int t = 0; t < 200; ++t) {
    EXPECT_NEAR(obs[0] * obs[0] + obs[1] * obs[1], 1.0, 1e-12);
    obs = env.step(std::vector<double>{rng.uniform(-1, 1)}).observation;
  }
}

TEST(Pendulum, HandIntegratedStepFromHanging) {
  PendulumEnv env;
  Rng rng(8);
  env.reset(rng);
  env.set_state(std::numbers::pi, 0.0);
  const StepResult r = env.step(std::vector<double>{0.5});
  // u = 1; theta_ddot = 15 sin(pi) + 3; theta_dot' = 0.05 * theta_ddot; theta' = pi + 0.05 theta_dot'
  const double theta_dot = 0.05 * (15.0 * std::sin(std::numbers::pi) + 3.0);
  const double theta = normalize_angle(std::numbers::pi + 0.05 * theta_dot);
  EXPECT_NEAR(env.theta_dot(), theta_dot, 1e-15);
  EXPECT_NEAR(env.theta_dot(), 0.15, 1e-12);
  EXPECT_NEAR(env.theta(), theta, 1e-15);
  EXPECT_NEAR(r.observation[0], std::cos(std::numbers::pi + 0.0075), 1e-12);
  EXPECT_NEAR(r.reward, -(std::numbers::pi * std::numbers::pi + 0.001), 1e-12);
}

TEST(Pendulum, SpeedIsClipped) {
  PendulumEnv env;
  Rng rng(9);
  env.reset(rng);
  env.set_state(1.0, 7.99);
  env.step(std::vector<double>{1.0});
  EXPECT_EQ(env.theta_dot(), 8.0);
}

TEST(NormalizeAngle, WrapsIntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(normalize_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(normalize_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(normalize_angle(3.0 * std::numbers::pi / 2.0), -std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(normalize_angle(0.25), 0.25, 1e-15);
  EXPECT_NEAR(normalize_angle(0.25 - 4.0 * std::numbers::pi), 0.25, 1e-14);
}

TEST(Registry, KnownNamesAndErrors) {
  for (const std::string& name : env_names()) EXPECT_EQ(make_env(name)->name(), name);
  EXPECT_EQ(make_env("pointmass-6d")->action_dims(), 6u);
  EXPECT_THROW(make_env("cartpole"), ConfigError);
  EXPECT_THROW(make_env("pointmass-0d"), ConfigError);
  EXPECT_THROW(make_env("pointmass-xd"), ConfigError);
}

class EnvProperties : public ::testing::TestWithParam<std::string> {};

TEST_P(EnvProperties, DeterministicBoundedAndFixedWidth) {
  const auto a = make_env(GetParam());
  const auto b = a->clone();
  Rng policy(100);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng ra(seed);
    Rng rb(seed);
    std::vector<double> oa = a->reset(ra);
    std::vector<double> ob = b->reset(rb);
    EXPECT_EQ(oa, ob);
    EXPECT_EQ(oa.size(), a->observation_dim());
    while (!a->done()) {
      std::vector<double> act(a->action_dims());
      for (double& v : act) v = policy.uniform(-1.5, 1.5);
      const StepResult ra_step = a->step(act);
      const StepResult rb_step = b->step(act);
      EXPECT_EQ(ra_step.observation, rb_step.observation);
      EXPECT_EQ(ra_step.reward, rb_step.reward);
      EXPECT_EQ(ra_step.observation.size(), a->observation_dim());
      EXPECT_TRUE(a->reward_range().contains(ra_step.reward)) << ra_step.reward;
      for (double v : ra_step.observation) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_LE(a->steps(), a->horizon());
  }
}

INSTANTIATE_TEST_SUITE_P(AllEnvs, EnvProperties,
                         ::testing::Values("bandit-const", "bandit-quad", "pointmass-2d", "pointmass-5d", "pendulum"));

}  // namespace
}  // namespace upg
