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
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upg/rng.hpp"

namespace upg {

struct RewardRange {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double r) const noexcept { return r >= lo - 1e-12 && r <= hi + 1e-12; }
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminal = false;   // true end of the MDP; no bootstrap
  bool truncated = false;  // horizon reached; bootstrap from the value net
  bool done() const noexcept { return terminal || truncated; }
};

/// Episodic environment with actions in [-1, 1]^m. Out-of-range actions are clipped.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual std::size_t action_dims() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual RewardRange reward_range() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  std::vector<double> reset(Rng& rng);
  StepResult step(std::span<const double> action);

  std::size_t steps() const noexcept { return steps_; }
  bool done() const noexcept { return done_; }

 protected:
  virtual std::vector<double> do_reset(Rng& rng) = 0;
  // Action already clipped to [-1, 1]; fills observation, reward and terminal.
  virtual StepResult do_step(std::span<const double> action) = 0;

 private:
  std::size_t steps_ = 0;
  bool done_ = true;
};

using RewardFn = std::function<double(double)>;

// One-step bandit with a constant observation [1.0].
class BanditEnv final : public Env {
 public:
  BanditEnv(std::string name, RewardFn reward, RewardRange range);

  std::string name() const override { return name_; }
  std::size_t observation_dim() const override { return 1; }
  std::size_t action_dims() const override { return 1; }
  std::size_t horizon() const override { return 1; }
  RewardRange reward_range() const override { return range_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<BanditEnv>(*this); }

 protected:
  std::vector<double> do_reset(Rng& rng) override;
  StepResult do_step(std::span<const double> action) override;

 private:
  std::string name_;
  RewardFn reward_;
  RewardRange range_;
};

BanditEnv constant_bandit(double reward = 1.0);
// r(a) = -(a - target)^2.
BanditEnv quadratic_bandit(double target = 0.5);

/// Point mass on [-2, 2]^m, goal at the origin. Observation (pos, vel).
/// Semi-implicit Euler: vel += dt * a, then pos += dt * vel; both clipped to [-2, 2].
class PointMassEnv final : public Env {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kBound = 2.0;
  static constexpr double kActionCost = 0.01;

  explicit PointMassEnv(std::size_t dims, std::size_t horizon = 64);

  std::string name() const override;
  std::size_t observation_dim() const override { return 2 * dims_; }
  std::size_t action_dims() const override { return dims_; }
  std::size_t horizon() const override { return horizon_; }
  RewardRange reward_range() const override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMassEnv>(*this); }

  std::span<const double> position() const noexcept { return pos_; }
  std::span<const double> velocity() const noexcept { return vel_; }
  // Places the mass; for tests and scripted evaluation.
  void set_state(std::span<const double> pos, std::span<const double> vel);

 protected:
  std::vector<double> do_reset(Rng& rng) override;
  StepResult do_step(std::span<const double> action) override;

 private:
  std::vector<double> observation() const;

  std::size_t dims_;
  std::size_t horizon_;
  std::vector<double> pos_;
  std::vector<double> vel_;
};

/// Pendulum swing-up, theta = 0 upright. Observation (cos, sin, theta_dot).
class PendulumEnv final : public Env {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

  explicit PendulumEnv(std::size_t horizon = 200);

  std::string name() const override { return "pendulum"; }
  std::size_t observation_dim() const override { return 3; }
  std::size_t action_dims() const override { return 1; }
  std::size_t horizon() const override { return horizon_; }
  RewardRange reward_range() const override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PendulumEnv>(*this); }

  double theta() const noexcept { return theta_; }
  double theta_dot() const noexcept { return theta_dot_; }
  void set_state(double theta, double theta_dot);

 protected:
  std::vector<double> do_reset(Rng& rng) override;
  StepResult do_step(std::span<const double> action) override;

 private:
  std::vector<double> observation() const;

  std::size_t horizon_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

// Wraps an angle into (-pi, pi].
double normalize_angle(double theta);

// "bandit-const", "bandit-quad", "pointmass-<m>d", "pendulum".
std::unique_ptr<Env> make_env(std::string_view name);
std::vector<std::string> env_names();

}  // namespace upg
