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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "upg/autodiff.hpp"
#include "upg/rng.hpp"

namespace upg {

enum class HeadKind { gaussian, gaussian_tanh, beta, gibbs, ordinal, unimodal };

std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view name);
bool is_discrete(HeadKind kind);
std::span<const HeadKind> all_head_kinds();

// Floor applied to per-bin probabilities before they enter log / log(1 - p).
inline constexpr double kProbabilityFloor = 1e-7;

struct HeadConfig {
  HeadKind kind = HeadKind::unimodal;
  std::size_t bins = 11;
  double temperature = 2.5;
  bool learned_temperature = false;
  double temperature_min = 1.5;
  double temperature_max = 3.0;
  double probability_floor = kProbabilityFloor;

  // gibbs 1.5, unimodal 2.5, everything else 1.
  static double default_temperature(HeadKind kind);
  void validate() const;
};

// Number of network outputs the head consumes per state: m for unimodal and
// the Gaussian means, 2m for Beta, m*K for gibbs and ordinal.
std::size_t head_input_width(const HeadConfig& config, std::size_t action_dims);

/// K evenly spaced atoms on [-1, 1] per action dimension.
class ActionGrid {
 public:
  ActionGrid(std::size_t dims, std::size_t bins);

  std::size_t dims() const noexcept { return dims_; }
  std::size_t bins() const noexcept { return atoms_.size(); }
  std::span<const double> atoms() const noexcept { return atoms_; }
  double atom(std::size_t j) const;
  std::vector<double> decode(std::span<const std::size_t> indices) const;

 private:
  std::size_t dims_;
  std::vector<double> atoms_;
};

struct Action {
  std::vector<std::size_t> indices;  // discrete heads only
  std::vector<double> values;        // continuous action, one per dimension
};

struct SampledAction {
  Action action;
  double log_prob = 0.0;
};

// Either a fixed temperature or a (clamped) learned scalar on the graph.
using Temperature = std::variant<double, Var>;

/// Distribution produced by a head for a batch of states, factorized across
/// action dimensions. Discrete tensors are laid out [batch * dims x bins].
class DistOutput {
 public:
  HeadKind kind() const noexcept { return kind_; }
  std::size_t batch() const noexcept { return batch_; }
  std::size_t dims() const noexcept { return dims_; }
  std::size_t bins() const noexcept { return bins_; }

  Var probs() const;
  Var log_probs() const;
  // Unimodal only: truncated Poisson (before the ordinal transform).
  std::optional<Var> truncated() const noexcept { return truncated_; }
  // Ordinal and unimodal: logits fed to the final softmax.
  std::optional<Var> ordinal_logits() const noexcept { return ordinal_logits_; }
  // Continuous parameters, [batch x dims].
  std::optional<Var> mean() const noexcept { return mean_; }
  std::optional<Var> log_std() const noexcept { return log_std_; }
  std::optional<Var> alpha() const noexcept { return alpha_; }
  std::optional<Var> beta() const noexcept { return beta_; }

  // Probability vector of one (state, dimension) pair.
  std::vector<double> probabilities(std::size_t row, std::size_t dim) const;

  // Joint log-probability per state, [batch]; one action per state.
  Var log_prob(std::span<const Action> actions) const;
  // Joint entropy per state, [batch].
  Var entropy() const;

  std::vector<SampledAction> sample(Rng& rng) const;
  // Argmax bin for discrete heads, mean action for continuous ones.
  std::vector<Action> mode() const;

 private:
  friend DistOutput gibbs_head(Var, std::size_t, std::size_t, const Temperature&);
  friend DistOutput ordinal_head(Var, std::size_t, std::size_t, const Temperature&, double);
  friend DistOutput unimodal_head(Var, const ActionGrid&, const Temperature&, double);
  friend DistOutput gaussian_head(Var, Var, bool);
  friend DistOutput beta_head(Var);

  DistOutput(Graph* graph, HeadKind kind, std::size_t batch, std::size_t dims, std::size_t bins);
  void finish_discrete(Var logits);
  std::size_t check_actions(std::span<const Action> actions) const;

  Graph* graph_;
  HeadKind kind_;
  std::size_t batch_;
  std::size_t dims_;
  std::size_t bins_;
  std::optional<Var> probs_;
  std::optional<Var> log_probs_;
  std::optional<Var> truncated_;
  std::optional<Var> ordinal_logits_;
  std::optional<Var> mean_;
  std::optional<Var> log_std_;
  std::optional<Var> alpha_;
  std::optional<Var> beta_;
};

// Scalar log-PMF j log f - f - log j!.
double poisson_log_pmf(double rate, std::size_t j);

// logits [batch x dims*bins]; per-dimension softmax(logits / tau).
DistOutput gibbs_head(Var logits, std::size_t dims, std::size_t bins, const Temperature& temperature);

// logits [batch x dims*bins]; s = sigmoid(logits / tau) clamped, then the
// ordinal prefix-sum transform and a final softmax.
DistOutput ordinal_head(Var logits, std::size_t dims, std::size_t bins, const Temperature& temperature,
                        double floor = kProbabilityFloor);

/// Unimodal Poisson head.
///
/// `rates` [batch x dims] must be positive (the network applies softplus). Per
/// dimension: Poisson log-PMF over the K bins, tempered softmax (peaks at the
/// Poisson mode), clamp into [floor, 1 - floor], ordinal logits by prefix sums,
/// final softmax at temperature 1.
DistOutput unimodal_head(Var rates, const ActionGrid& grid, const Temperature& temperature,
                         double floor = kProbabilityFloor);

// means [batch x dims]; log_std [dims] is state-independent.
DistOutput gaussian_head(Var means, Var log_std, bool tanh_mean);

// raw [batch x 2*dims]: first dims columns feed alpha, the rest beta, each as softplus(raw) + 1.
DistOutput beta_head(Var raw);

// The shared ordinal transform on per-bin probabilities p [rows x K]: returns
// (ordinal logits, final log-probabilities).
std::pair<Var, Var> ordinal_transform(Var p);

}  // namespace upg
