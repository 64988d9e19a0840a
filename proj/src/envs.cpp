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

#include "upg/envs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "upg/errors.hpp"

namespace upg {

std::vector<double> Env::reset(Rng& rng) {
  steps_ = 0;
  done_ = false;
  return do_reset(rng);
}

StepResult Env::step(std::span<const double> action) {
  if (done_) throw StateError(fmt::format("{}: step called on a finished episode; call reset first", name()));
  if (action.size() != action_dims()) {
    throw DimensionError(fmt::format("{}: action has {} entries, expected {}", name(), action.size(), action_dims()));
  }
  std::vector<double> clipped(action.begin(), action.end());
  for (double& a : clipped) {
    if (!std::isfinite(a)) throw DomainError(fmt::format("{}: non-finite action", name()));
    a = std::clamp(a, -1.0, 1.0);
  }
  StepResult r = do_step(clipped);
  ++steps_;
  if (!r.terminal && steps_ >= horizon()) r.truncated = true;
  done_ = r.done();
  return r;
}

BanditEnv::BanditEnv(std::string name, RewardFn reward, RewardRange range)
    : name_(std::move(name)), reward_(std::move(reward)), range_(range) {}

std::vector<double> BanditEnv::do_reset(Rng&) { return {1.0}; }

StepResult BanditEnv::do_step(std::span<const double> action) {
  StepResult r;
  r.observation = {1.0};
  r.reward = reward_(action[0]);
  r.terminal = true;
  return r;
}

BanditEnv constant_bandit(double reward) {
  return BanditEnv("bandit-const", [reward](double) { return reward; }, RewardRange{reward, reward});
}

BanditEnv quadratic_bandit(double target) {
  const double worst = std::max(std::pow(-1.0 - target, 2), std::pow(1.0 - target, 2));
  return BanditEnv(
      "bandit-quad", [target](double a) { return -(a - target) * (a - target); }, RewardRange{-worst, 0.0});
}

PointMassEnv::PointMassEnv(std::size_t dims, std::size_t horizon)
    : dims_(dims), horizon_(horizon), pos_(dims, 0.0), vel_(dims, 0.0) {
  if (dims == 0) throw ParameterError("point mass needs at least one dimension");
  if (horizon == 0) throw ParameterError("horizon must be positive");
}

std::string PointMassEnv::name() const { return fmt::format("pointmass-{}d", dims_); }

RewardRange PointMassEnv::reward_range() const {
  const double m = static_cast<double>(dims_);
  return {-(kBound * kBound * m + kActionCost * m), 0.0};
}

void PointMassEnv::set_state(std::span<const double> pos, std::span<const double> vel) {
  if (pos.size() != dims_ || vel.size() != dims_) throw DimensionError("point mass state has the wrong size");
  pos_.assign(pos.begin(), pos.end());
  vel_.assign(vel.begin(), vel.end());
}

std::vector<double> PointMassEnv::observation() const {
  std::vector<double> obs(pos_);
  obs.insert(obs.end(), vel_.begin(), vel_.end());
  return obs;
}

std::vector<double> PointMassEnv::do_reset(Rng& rng) {
  for (std::size_t i = 0; i < dims_; ++i) {
    pos_[i] = rng.uniform(-1.0, 1.0);
    vel_[i] = 0.0;
  }
  return observation();
}

StepResult PointMassEnv::do_step(std::span<const double> action) {
  StepResult r;
  double cost = 0.0;
  for (std::size_t i = 0; i < dims_; ++i) {
    vel_[i] = std::clamp(vel_[i] + kDt * action[i], -kBound, kBound);
    pos_[i] = std::clamp(pos_[i] + kDt * vel_[i], -kBound, kBound);
    cost += pos_[i] * pos_[i] + kActionCost * action[i] * action[i];
  }
  r.reward = -cost;
  r.observation = observation();
  return r;
}

double normalize_angle(double theta) {
  double t = std::fmod(theta + std::numbers::pi, 2.0 * std::numbers::pi);
  if (t <= 0.0) t += 2.0 * std::numbers::pi;
  return t - std::numbers::pi;
}

PendulumEnv::PendulumEnv(std::size_t horizon) : horizon_(horizon) {
  if (horizon == 0) throw ParameterError("horizon must be positive");
}

RewardRange PendulumEnv::reward_range() const {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return {-(pi2 + 0.1 * kMaxSpeed * kMaxSpeed + 0.001 * kMaxTorque * kMaxTorque), 0.0};
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

std::vector<double> PendulumEnv::observation() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

std::vector<double> PendulumEnv::do_reset(Rng& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  return observation();
}

StepResult PendulumEnv::do_step(std::span<const double> action) {
  const double u = kMaxTorque * action[0];
  const double angle = normalize_angle(theta_);
  StepResult r;
  r.reward = -(angle * angle + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
  const double accel =
      3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) + 3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ = std::clamp(theta_dot_ + kDt * accel, -kMaxSpeed, kMaxSpeed);
  theta_ = normalize_angle(theta_ + kDt * theta_dot_);
  r.observation = observation();
  return r;
}

std::unique_ptr<Env> make_env(std::string_view name) {
  if (name == "bandit-const") return std::make_unique<BanditEnv>(constant_bandit());
  if (name == "bandit-quad") return std::make_unique<BanditEnv>(quadratic_bandit());
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name.starts_with("pointmass-") && name.ends_with("d")) {
    const std::string_view digits = name.substr(10, name.size() - 11);
    std::size_t dims = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), dims);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && dims >= 1 && dims <= 64) {
      return std::make_unique<PointMassEnv>(dims);
    }
  }
  throw ConfigError(fmt::format("unknown environment '{}' (known: bandit-const, bandit-quad, pointmass-<m>d, pendulum)", name));
}

std::vector<std::string> env_names() { return {"bandit-const", "bandit-quad", "pointmass-2d", "pendulum"}; }

}  // namespace upg
