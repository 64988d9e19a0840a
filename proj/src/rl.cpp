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

#include "upg/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "upg/errors.hpp"

namespace upg {
namespace {

Tensor rows_to_tensor(const std::vector<double>& flat, std::size_t cols) {
  return Tensor(Shape{flat.size() / cols, cols}, flat);
}

Tensor select_rows(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t cols = t.cols();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  for (std::size_t r : rows) {
    const auto begin = t.data().begin() + static_cast<std::ptrdiff_t>(r * cols);
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(cols));
  }
  return Tensor(Shape{rows.size(), cols}, std::move(out));
}

std::vector<double> batched_values(const PolicyValueNet& net, const Tensor& states) {
  Graph g;
  const NetBinding b = bind(g, net, BindParts::value);
  const Tensor& v = forward_value(net, b, g.constant(states)).value();
  return {v.data().begin(), v.data().end()};
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

Var value_loss(const PolicyValueNet& net, const NetBinding& binding, const RolloutBatch& batch,
               std::span<const std::size_t> rows, const Tensor& states) {
  Graph& g = *binding.value.front().graph;
  const Var v = forward_value(net, binding, g.constant(states));
  std::vector<double> targets;
  targets.reserve(rows.size());
  for (std::size_t r : rows) targets.push_back(batch.returns[r]);
  return mean(square(v - g.constant(Tensor::vector(targets))));
}

void check_finite_loss(double value, std::string_view what, std::size_t step) {
  if (!std::isfinite(value)) {
    throw TrainingError(fmt::format("{} became non-finite ({}) at optimizer step {}", what, value, step));
  }
}

}  // namespace

std::string_view to_string(Algorithm algorithm) { return algorithm == Algorithm::ppo ? "ppo" : "pg"; }

Algorithm parse_algorithm(std::string_view name) {
  if (name == "ppo") return Algorithm::ppo;
  if (name == "pg") return Algorithm::pg;
  throw ParameterError(fmt::format("unknown algorithm '{}' (expected ppo or pg)", name));
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(gamma >= 0.0 && gamma < 1.0)) problems.push_back(fmt::format("gamma must be in [0, 1), got {}", gamma));
  if (!(lambda >= 0.0 && lambda <= 1.0)) problems.push_back(fmt::format("lambda must be in [0, 1], got {}", lambda));
  if (!(clip_ratio > 0.0)) problems.push_back(fmt::format("clip_ratio must be positive, got {}", clip_ratio));
  if (epochs == 0) problems.push_back("epochs must be at least 1");
  if (minibatch_size == 0) problems.push_back("minibatch_size must be at least 1");
  if (!(learning_rate > 0.0)) problems.push_back(fmt::format("learning_rate must be positive, got {}", learning_rate));
  if (!(entropy_coef >= 0.0)) problems.push_back("entropy_coef must be non-negative");
  if (!(value_coef >= 0.0)) problems.push_back("value_coef must be non-negative");
  if (!(reward_scale > 0.0)) problems.push_back("reward_scale must be positive");
  if (steps_per_batch == 0) problems.push_back("steps_per_batch must be at least 1");
  if (total_steps == 0) problems.push_back("total_steps must be at least 1");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ParameterError(msg);
  }
}

void RolloutBatch::check() const {
  const std::size_t n = size();
  const bool ok = states.rows() == n && actions.size() == n && log_probs.size() == n && values.size() == n &&
                  next_values.size() == n && terminal.size() == n && episode_end.size() == n &&
                  (advantages.empty() || advantages.size() == n) && (returns.empty() || returns.size() == n);
  if (!ok) throw DimensionError("rollout batch fields have mismatched lengths");
  for (const auto* field : {&rewards, &log_probs, &values, &next_values, &advantages, &returns}) {
    for (double v : *field) {
      if (!std::isfinite(v)) throw NumericError("rollout batch holds a non-finite entry");
    }
  }
}

RolloutWorker::RolloutWorker(std::unique_ptr<Env> env) : env_(std::move(env)) {}

RolloutBatch RolloutWorker::collect(const PolicyValueNet& net, std::size_t steps, Rng& rng) {
  if (steps == 0) throw ParameterError("rollout needs at least one step");
  const std::size_t obs_dim = env_->observation_dim();
  if (net.config().observation_dim != obs_dim || net.config().action_dims != env_->action_dims()) {
    throw DimensionError("network does not match the environment's observation or action size");
  }
  RolloutBatch batch;
  std::vector<double> states;
  std::vector<double> next_states;
  states.reserve(steps * obs_dim);
  next_states.reserve(steps * obs_dim);
  double entropy_sum = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (needs_reset_) {
      observation_ = env_->reset(rng);
      episode_return_ = 0.0;
      needs_reset_ = false;
    }
    Graph g;
    const NetBinding binding = bind(g, net, BindParts::policy);
    const DistOutput dist = forward_policy(net, binding, g.constant(Tensor(Shape{1, obs_dim}, observation_)));
    SampledAction sampled = std::move(dist.sample(rng).front());
    entropy_sum += dist.entropy().item();
    const StepResult step = env_->step(sampled.action.values);

    states.insert(states.end(), observation_.begin(), observation_.end());
    next_states.insert(next_states.end(), step.observation.begin(), step.observation.end());
    batch.actions.push_back(std::move(sampled.action));
    batch.log_probs.push_back(sampled.log_prob);
    batch.rewards.push_back(step.reward);
    batch.terminal.push_back(step.terminal ? 1 : 0);
    batch.episode_end.push_back(step.done() ? 1 : 0);
    episode_return_ += step.reward;
    observation_ = step.observation;
    if (step.done()) {
      batch.episode_returns.push_back(episode_return_);
      needs_reset_ = true;
    }
  }
  batch.states = rows_to_tensor(states, obs_dim);
  batch.values = batched_values(net, batch.states);
  batch.next_values = batched_values(net, rows_to_tensor(next_states, obs_dim));
  batch.mean_entropy = entropy_sum / static_cast<double>(steps);
  return batch;
}

RolloutBatch collect_rollout(Env& env, const PolicyValueNet& net, std::size_t steps, Rng& rng) {
  RolloutWorker worker(env.clone());
  RolloutBatch batch = worker.collect(net, steps, rng);
  return batch;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda) {
  const std::size_t n = batch.size();
  batch.advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  double next_advantage = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double bootstrap = batch.terminal[k] ? 0.0 : gamma * batch.next_values[k];
    const double delta = batch.rewards[k] + bootstrap - batch.values[k];
    const double carry = batch.episode_end[k] || k + 1 == n ? 0.0 : gamma * lambda * next_advantage;
    batch.advantages[k] = delta + carry;
    batch.returns[k] = batch.advantages[k] + batch.values[k];
    next_advantage = batch.advantages[k];
  }
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.size() < 2) return;
  const double n = static_cast<double>(advantages.size());
  const double mu = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mu) * (a - mu);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-8) return;
  for (double& a : advantages) a = (a - mu) / sd;
}

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw DimensionError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
}

std::pair<double, double> clip_grad_norm(std::span<double> grad, std::size_t split, double max_norm) {
  auto clip = [max_norm](std::span<double> g) {
    double sq = 0.0;
    for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      const double s = max_norm / norm;
      for (double& v : g) v *= s;
    }
    return norm;
  };
  return {clip(grad.subspan(0, split)), clip(grad.subspan(split))};
}

Var pg_loss(const PolicyValueNet& net, const NetBinding& binding, const RolloutBatch& batch,
            std::span<const std::size_t> rows) {
  Graph& g = *binding.policy.front().graph;
  const DistOutput dist = forward_policy(net, binding, g.constant(select_rows(batch.states, rows)));
  std::vector<Action> actions;
  std::vector<double> adv;
  actions.reserve(rows.size());
  adv.reserve(rows.size());
  for (std::size_t r : rows) {
    actions.push_back(batch.actions[r]);
    adv.push_back(batch.advantages[r]);
  }
  return neg(mean(dist.log_prob(actions) * g.constant(Tensor::vector(adv))));
}

std::vector<double> policy_gradient(const PolicyValueNet& net, const RolloutBatch& batch) {
  Graph g;
  const NetBinding binding = bind(g, net, BindParts::policy);
  const auto rows = all_rows(batch.size());
  g.backward(pg_loss(net, binding, batch, rows));
  return collect_gradients(g, binding, net);
}

UpdateStats pg_update(PolicyValueNet& net, Adam& optimizer, const RolloutBatch& batch, const TrainConfig& config) {
  batch.check();
  const auto rows = all_rows(batch.size());
  Graph g;
  const NetBinding binding = bind(g, net, BindParts::both);
  const Var policy = pg_loss(net, binding, batch, rows);
  const Var value = value_loss(net, binding, batch, rows, batch.states);
  check_finite_loss(policy.item(), "policy loss", optimizer.steps());
  check_finite_loss(value.item(), "value loss", optimizer.steps());
  g.backward(policy + scale(value, config.value_coef));
  std::vector<double> grad = collect_gradients(g, binding, net);
  clip_grad_norm(grad, net.policy_parameter_count(), config.max_grad_norm);
  std::vector<double> flat = net.flat_parameters();
  optimizer.step(flat, grad);
  net.set_flat_parameters(flat);
  UpdateStats stats;
  stats.policy_loss = policy.item();
  stats.value_loss = value.item();
  stats.minibatches = 1;
  return stats;
}

PpoLoss ppo_loss(const PolicyValueNet& net, const NetBinding& binding, const RolloutBatch& batch,
                 std::span<const std::size_t> rows, const TrainConfig& config) {
  Graph& g = *binding.policy.front().graph;
  const Tensor states = select_rows(batch.states, rows);
  const DistOutput dist = forward_policy(net, binding, g.constant(states));
  std::vector<Action> actions;
  std::vector<double> adv;
  std::vector<double> old_lp;
  for (std::size_t r : rows) {
    actions.push_back(batch.actions[r]);
    adv.push_back(batch.advantages[r]);
    old_lp.push_back(batch.log_probs[r]);
  }
  const Var new_lp = dist.log_prob(actions);
  const Var ratio = exp(new_lp - g.constant(Tensor::vector(old_lp)));
  const Var a = g.constant(Tensor::vector(adv));
  const double eps = config.clip_ratio;
  const Var surrogate = minimum(ratio * a, clamp(ratio, 1.0 - eps, 1.0 + eps) * a);

  PpoLoss out;
  out.policy = neg(mean(surrogate));
  out.entropy = mean(dist.entropy());
  out.value = binding.value.empty() ? g.constant(Tensor::scalar(0.0)) : value_loss(net, binding, batch, rows, states);
  out.total = out.policy + scale(out.value, config.value_coef) - scale(out.entropy, config.entropy_coef);

  const Tensor& rv = ratio.value();
  const Tensor& lp = new_lp.value();
  double kl = 0.0;
  double clipped = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    kl += old_lp[i] - lp[i];
    if (std::abs(rv[i] - 1.0) > eps) clipped += 1.0;
  }
  out.kl = kl / static_cast<double>(rows.size());
  out.clip_fraction = clipped / static_cast<double>(rows.size());
  return out;
}

UpdateStats ppo_update(PolicyValueNet& net, Adam& optimizer, const RolloutBatch& batch, const TrainConfig& config,
                       Rng& rng) {
  batch.check();
  std::vector<std::size_t> order = all_rows(batch.size());
  UpdateStats stats;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + config.minibatch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      Graph g;
      const NetBinding binding = bind(g, net, BindParts::both);
      const PpoLoss loss = ppo_loss(net, binding, batch, rows, config);
      check_finite_loss(loss.total.item(), "PPO loss", optimizer.steps());
      g.backward(loss.total);
      std::vector<double> grad = collect_gradients(g, binding, net);
      clip_grad_norm(grad, net.policy_parameter_count(), config.max_grad_norm);
      std::vector<double> flat = net.flat_parameters();
      optimizer.step(flat, grad);
      net.set_flat_parameters(flat);

      stats.policy_loss += loss.policy.item();
      stats.value_loss += loss.value.item();
      stats.entropy += loss.entropy.item();
      stats.kl += loss.kl;
      stats.clip_fraction += loss.clip_fraction;
      ++stats.minibatches;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(stats.minibatches, 1));
  stats.policy_loss /= n;
  stats.value_loss /= n;
  stats.entropy /= n;
  stats.kl /= n;
  stats.clip_fraction /= n;
  return stats;
}

EvalResult evaluate_policy(const PolicyValueNet& net, const Env& prototype, const EvalConfig& config) {
  if (config.episodes == 0) throw ParameterError("evaluation needs at least one episode");
  const auto env = prototype.clone();
  Rng rng(config.seed);
  EvalResult result;
  double entropy_sum = 0.0;
  std::size_t entropy_count = 0;
  const std::size_t obs_dim = env->observation_dim();
  for (std::size_t e = 0; e < config.episodes; ++e) {
    std::vector<double> obs = env->reset(rng);
    double total = 0.0;
    while (!env->done()) {
      Graph g;
      const NetBinding binding = bind(g, net, BindParts::policy);
      const DistOutput dist = forward_policy(net, binding, g.constant(Tensor(Shape{1, obs_dim}, obs)));
      entropy_sum += dist.entropy().item();
      ++entropy_count;
      const Action action = config.stochastic ? dist.sample(rng).front().action : dist.mode().front();
      const StepResult step = env->step(action.values);
      total += step.reward;
      obs = step.observation;
    }
    result.returns.push_back(total);
  }
  const double n = static_cast<double>(result.returns.size());
  result.mean_return = std::accumulate(result.returns.begin(), result.returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : result.returns) var += (r - result.mean_return) * (r - result.mean_return);
  result.std_return = std::sqrt(var / n);
  result.mean_entropy = entropy_sum / static_cast<double>(entropy_count);
  return result;
}

RunResult train_run(const RunSpec& spec) {
  spec.train.validate();
  if (spec.eval.interval == 0) throw ParameterError("eval interval must be at least 1");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  RolloutWorker worker(make_env(spec.env));
  NetworkConfig net_config = spec.network;
  net_config.observation_dim = worker.env().observation_dim();
  net_config.action_dims = worker.env().action_dims();
  RunResult result{{}, PolicyValueNet(net_config)};
  PolicyValueNet& net = result.net;
  Rng rng(spec.seed);
  net.init_params(rng);
  Adam optimizer(net.parameter_count(), spec.train.learning_rate);

  const auto prototype = make_env(spec.env);
  auto record = [&](std::size_t step, double kl, double clip_frac) {
    const EvalResult eval = evaluate_policy(net, *prototype, spec.eval);
    result.records.push_back({step, eval.mean_return, eval.std_return, eval.mean_entropy, kl, clip_frac, elapsed()});
  };
  record(0, 0.0, 0.0);

  std::size_t steps = 0;
  std::size_t next_eval = spec.eval.interval;
  while (steps < spec.train.total_steps) {
    const std::size_t n = std::min(spec.train.steps_per_batch, spec.train.total_steps - steps);
    RolloutBatch batch = worker.collect(net, n, rng);
    steps += n;
    if (spec.train.reward_scale != 1.0) {
      for (double& r : batch.rewards) r *= spec.train.reward_scale;
    }
    compute_gae(batch, spec.train.gamma, spec.train.lambda);
    if (spec.train.normalize_advantages) normalize_advantages(batch.advantages);
    const UpdateStats stats = spec.train.algorithm == Algorithm::ppo
                                  ? ppo_update(net, optimizer, batch, spec.train, rng)
                                  : pg_update(net, optimizer, batch, spec.train);
    if (steps >= next_eval || steps >= spec.train.total_steps) {
      record(steps, stats.kl, stats.clip_fraction);
      while (next_eval <= steps) next_eval += spec.eval.interval;
    }
  }
  return result;
}

double last_n_mean(std::span<const RunRecord> records, std::size_t n) {
  if (records.empty()) throw ParameterError("no records");
  const std::size_t k = std::min(n, records.size());
  double total = 0.0;
  for (std::size_t i = records.size() - k; i < records.size(); ++i) total += records[i].mean_return;
  return total / static_cast<double>(k);
}

}  // namespace upg
