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
#include <filesystem>
#include <span>
#include <vector>

#include "upg/autodiff.hpp"
#include "upg/heads.hpp"
#include "upg/rng.hpp"

namespace upg {

/// Fully connected tanh network; the output layer is linear.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t output_dim = 0;

  std::size_t layer_count() const noexcept { return hidden.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  std::size_t layer_parameter_count(std::size_t layer) const;
  std::size_t parameter_count() const;
};

// Orthogonal matrix scaled by `gain`: columns orthonormal when rows >= cols,
// rows orthonormal otherwise.
Tensor orthogonal_matrix(std::size_t rows, std::size_t cols, double gain, Rng& rng);

// input [batch x in]; params laid out W0, b0, W1, b1, ... with W_l [in x out].
Var mlp_forward(Var input, std::span<const Var> params);

struct NetworkConfig {
  std::size_t observation_dim = 1;
  std::size_t action_dims = 1;
  HeadConfig head;
  std::vector<std::size_t> policy_hidden{64, 64};
  std::vector<std::size_t> value_hidden{64, 64};
  double initial_log_std = 0.0;

  void validate() const;
};

struct InitGains {
  double hidden = 1.4142135623730951;  // sqrt(2)
  double policy_output = 0.01;
  double value_output = 1.0;
};

/// Policy MLP + head extras + value MLP.
///
/// Parameter order (also the checkpoint order): policy W0, b0, ..., then the
/// state-independent log-std vector (Gaussian kinds), then the learned
/// temperature bias (if enabled), then value W0, b0, ....
/// A fresh net has all-zero MLP weights; call init_params for training.
class PolicyValueNet {
 public:
  explicit PolicyValueNet(NetworkConfig config);

  const NetworkConfig& config() const noexcept { return config_; }
  const HeadConfig& head() const noexcept { return config_.head; }
  MlpSpec policy_spec() const;
  MlpSpec value_spec() const;

  void init_params(Rng& rng, const InitGains& gains = {});

  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  // The first policy_tensor_count() tensors belong to the policy group.
  std::size_t policy_tensor_count() const noexcept { return policy_tensors_; }
  std::size_t parameter_count() const;
  std::size_t policy_parameter_count() const;

  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  // FNV-1a over a canonical description of the architecture.
  std::uint64_t spec_hash() const;

 private:
  NetworkConfig config_;
  std::vector<Tensor> params_;
  std::size_t policy_tensors_ = 0;
};

/// Parameters registered as leaves on one graph, same order as parameters().
struct NetBinding {
  std::vector<Var> policy;
  std::vector<Var> value;
};

enum class BindParts { policy, value, both };

NetBinding bind(Graph& graph, const PolicyValueNet& net, BindParts parts = BindParts::both);

DistOutput forward_policy(const PolicyValueNet& net, const NetBinding& binding, Var states);
// [batch] value estimates.
Var forward_value(const PolicyValueNet& net, const NetBinding& binding, Var states);

// Leaf gradients flattened in parameter order. Missing parts contribute zeros.
std::vector<double> collect_gradients(const Graph& graph, const NetBinding& binding, const PolicyValueNet& net);

// Binary checkpoint: "UPGP", u32 version, u64 spec hash, u64 value count,
// then the flat parameters as little-endian IEEE-754 doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const PolicyValueNet& net, const std::filesystem::path& path);
void load_checkpoint(PolicyValueNet& net, const std::filesystem::path& path);

}  // namespace upg
