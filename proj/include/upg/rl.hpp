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
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upg/autodiff.hpp"
#include "upg/envs.hpp"
#include "upg/heads.hpp"
#include "upg/network.hpp"
#include "upg/rng.hpp"

namespace upg {

enum class Algorithm { ppo, pg };
std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);

struct TrainConfig {
  Algorithm algorithm = Algorithm::ppo;
  double gamma = 0.98;
  double lambda = 0.95;
  double clip_ratio = 0.2;
  std::size_t epochs = 10;
  std::size_t minibatch_size = 64;
  double learning_rate = 3e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  bool normalize_advantages = true;
  double reward_scale = 1.0;  // applied to rewards before GAE only
  std::size_t steps_per_batch = 2048;
  std::size_t total_steps = 150000;

  void validate() const;
};

/// Time-major on-policy samples. `terminal` stops bootstrapping; `episode_end`
/// (terminal or truncated) stops advantage propagation. next_values holds
/// V(s_{t+1}) for every step, used only where terminal is false.
struct RolloutBatch {
  Tensor states;  // [N x obs_dim]
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> next_values;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> episode_end;
  std::vector<double> advantages;
  std::vector<double> returns;
  // Undiscounted returns of episodes that finished inside this batch.
  std::vector<double> episode_returns;
  double mean_entropy = 0.0;

  std::size_t size() const noexcept { return rewards.size(); }
  // Throws DimensionError on length mismatch, NumericError on non-finite entries.
  void check() const;
};

/// Owns one environment and carries the in-progress episode across batches.
class RolloutWorker {
 public:
  explicit RolloutWorker(std::unique_ptr<Env> env);

  Env& env() noexcept { return *env_; }
  RolloutBatch collect(const PolicyValueNet& net, std::size_t steps, Rng& rng);

 private:
  std::unique_ptr<Env> env_;
  std::vector<double> observation_;
  double episode_return_ = 0.0;
  bool needs_reset_ = true;
};

RolloutBatch collect_rollout(Env& env, const PolicyValueNet& net, std::size_t steps, Rng& rng);

// Fills batch.advantages and batch.returns:
//   delta_t = r_t + gamma * next_value_t * (1 - terminal_t) - V_t
//   A_t = delta_t + gamma * lambda * (1 - episode_end_t) * A_{t+1}
//   returns = A + V
void compute_gae(RolloutBatch& batch, double gamma, double lambda);

// In-place (x - mean) / std with the population std; no-op below two samples
// or when std is below 1e-8.
void normalize_advantages(std::span<double> advantages);

/// Adam with bias correction, minimizing.
class Adam {
 public:
  explicit Adam(std::size_t size, double learning_rate = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  void step(std::span<double> params, std::span<const double> grad);
  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// Scales each of [0, split) and [split, n) to L2 norm <= max_norm. Returns the
// pre-clip norms of both groups.
std::pair<double, double> clip_grad_norm(std::span<double> grad, std::size_t split, double max_norm);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t minibatches = 0;
};

// Surrogate -(1/N) sum log pi(a_i|s_i) A_i over the given rows, on `graph`.
Var pg_loss(const PolicyValueNet& net, const NetBinding& binding, const RolloutBatch& batch,
            std::span<const std::size_t> rows);

// Flat gradient (full parameter layout; value part zero) of pg_loss over the whole batch.
std::vector<double> policy_gradient(const PolicyValueNet& net, const RolloutBatch& batch);

// One Adam step on pg_loss + value_coef * MSE(V, returns), full batch.
UpdateStats pg_update(PolicyValueNet& net, Adam& optimizer, const RolloutBatch& batch, const TrainConfig& config);

struct PpoLoss {
  Var total;
  Var policy;
  Var value;
  Var entropy;
  double kl = 0.0;             // mean(old log-prob - new log-prob)
  double clip_fraction = 0.0;  // share of rows with |ratio - 1| > clip
};

PpoLoss ppo_loss(const PolicyValueNet& net, const NetBinding& binding, const RolloutBatch& batch,
                 std::span<const std::size_t> rows, const TrainConfig& config);

// Epochs of shuffled minibatch Adam steps on the clipped surrogate.
UpdateStats ppo_update(PolicyValueNet& net, Adam& optimizer, const RolloutBatch& batch, const TrainConfig& config,
                       Rng& rng);

struct EvalConfig {
  std::size_t interval = 2048;  // environment steps between evaluations
  std::size_t episodes = 5;
  std::uint64_t seed = 12345;   // every evaluation replays the same start states
  bool stochastic = false;      // sample instead of taking the mode
};

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_entropy = 0.0;
  std::vector<double> returns;
};

EvalResult evaluate_policy(const PolicyValueNet& net, const Env& prototype, const EvalConfig& config);

struct RunRecord {
  std::size_t step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_frac = 0.0;
  double wall_seconds = 0.0;  // not part of any CSV
};

struct RunSpec {
  std::string env = "pendulum";
  NetworkConfig network;  // observation_dim and action_dims are taken from the env
  TrainConfig train;
  EvalConfig eval;
  std::uint64_t seed = 0;
};

struct RunResult {
  std::vector<RunRecord> records;
  PolicyValueNet net;
};

// Builds env and net, initializes with Rng(seed), alternates rollouts and
// updates until total_steps, evaluating at step 0 and every eval.interval steps.
RunResult train_run(const RunSpec& spec);

// Mean of the last min(n, size) records' mean_return.
double last_n_mean(std::span<const RunRecord> records, std::size_t n = 20);

}  // namespace upg
