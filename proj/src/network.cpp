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

#include "upg/network.hpp"

#include <Eigen/QR>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "upg/errors.hpp"

namespace upg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::array<char, 4> kCheckpointMagic = {'U', 'P', 'G', 'P'};

void add_layers(std::vector<Tensor>& params, const MlpSpec& spec) {
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    params.emplace_back(Shape{spec.fan_in(l), spec.fan_out(l)});
    params.emplace_back(Shape{spec.fan_out(l)});
  }
}

void init_layers(std::span<Tensor> layers, const MlpSpec& spec, Rng& rng, double hidden_gain, double output_gain) {
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double gain = l + 1 == spec.layer_count() ? output_gain : hidden_gain;
    layers[2 * l] = orthogonal_matrix(spec.fan_in(l), spec.fan_out(l), gain, rng);
    layers[2 * l + 1].fill(0.0);
  }
}

Var as_batch(Var states, std::size_t width) {
  const Tensor& s = states.value();
  if (s.cols() != width || s.rank() > 2) {
    throw DimensionError("state batch " + shape_string(s.shape()) + " does not match input dim " +
                         std::to_string(width));
  }
  return s.rank() == 2 ? states : reshape(states, Shape{s.rows(), width});
}

void write_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint64_t read_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParameterError("checkpoint is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

std::size_t MlpSpec::fan_in(std::size_t layer) const {
  if (layer >= layer_count()) throw IndexError("layer index out of range");
  return layer == 0 ? input_dim : hidden[layer - 1];
}

std::size_t MlpSpec::fan_out(std::size_t layer) const {
  if (layer >= layer_count()) throw IndexError("layer index out of range");
  return layer == hidden.size() ? output_dim : hidden[layer];
}

std::size_t MlpSpec::layer_parameter_count(std::size_t layer) const {
  return fan_in(layer) * fan_out(layer) + fan_out(layer);
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) n += layer_parameter_count(l);
  return n;
}

Tensor orthogonal_matrix(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const auto n = static_cast<Eigen::Index>(tall ? rows : cols);
  const auto k = static_cast<Eigen::Index>(tall ? cols : rows);
  Eigen::MatrixXd a(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  const Eigen::MatrixXd r = qr.matrixQR();
  // Fix column signs so the factorization is unique.
  for (Eigen::Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  Tensor out(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = tall ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                            : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      out.at(i, j) = gain * v;
    }
  }
  return out;
}

Var mlp_forward(Var input, std::span<const Var> params) {
  if (params.empty() || params.size() % 2 != 0) throw ParameterError("mlp_forward expects (weight, bias) pairs");
  Var h = input;
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_rowwise(matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < layers) h = tanh(h);
  }
  return h;
}

void NetworkConfig::validate() const {
  if (observation_dim == 0) throw ParameterError("observation dimension must be positive");
  if (action_dims == 0) throw ParameterError("action dimension must be positive");
  head.validate();
  for (std::size_t h : policy_hidden) {
    if (h == 0) throw ParameterError("hidden layer sizes must be positive");
  }
  for (std::size_t h : value_hidden) {
    if (h == 0) throw ParameterError("hidden layer sizes must be positive");
  }
}

PolicyValueNet::PolicyValueNet(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  add_layers(params_, policy_spec());
  const HeadKind kind = config_.head.kind;
  if (kind == HeadKind::gaussian || kind == HeadKind::gaussian_tanh) {
    params_.emplace_back(Shape{config_.action_dims}, config_.initial_log_std);
  }
  if (config_.head.learned_temperature) {
    params_.push_back(Tensor::scalar(config_.head.temperature));
  }
  policy_tensors_ = params_.size();
  add_layers(params_, value_spec());
}

MlpSpec PolicyValueNet::policy_spec() const {
  return MlpSpec{config_.observation_dim, config_.policy_hidden, head_input_width(config_.head, config_.action_dims)};
}

MlpSpec PolicyValueNet::value_spec() const { return MlpSpec{config_.observation_dim, config_.value_hidden, 1}; }

void PolicyValueNet::init_params(Rng& rng, const InitGains& gains) {
  const MlpSpec ps = policy_spec();
  const MlpSpec vs = value_spec();
  const std::span<Tensor> all(params_);
  init_layers(all.subspan(0, 2 * ps.layer_count()), ps, rng, gains.hidden, gains.policy_output);
  std::size_t next = 2 * ps.layer_count();
  const HeadKind kind = config_.head.kind;
  if (kind == HeadKind::gaussian || kind == HeadKind::gaussian_tanh) params_[next++].fill(config_.initial_log_std);
  if (config_.head.learned_temperature) params_[next++].fill(config_.head.temperature);
  init_layers(all.subspan(policy_tensors_, 2 * vs.layer_count()), vs, rng, gains.hidden, gains.value_output);
}

std::size_t PolicyValueNet::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

std::size_t PolicyValueNet::policy_parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < policy_tensors_; ++i) n += params_[i].size();
  return n;
}

std::vector<double> PolicyValueNet::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Tensor& t : params_) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return flat;
}

void PolicyValueNet::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionError("flat parameter vector has the wrong length");
  std::size_t offset = 0;
  for (Tensor& t : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data().begin());
    offset += t.size();
  }
}

std::uint64_t PolicyValueNet::spec_hash() const {
  std::string desc = "obs=" + std::to_string(config_.observation_dim) +
                     ";act=" + std::to_string(config_.action_dims) + ";head=" + std::string(to_string(config_.head.kind)) +
                     ";K=" + std::to_string(config_.head.bins) +
                     ";learned_tau=" + std::to_string(static_cast<int>(config_.head.learned_temperature)) + ";policy=";
  for (std::size_t h : config_.policy_hidden) desc += std::to_string(h) + ",";
  desc += ";value=";
  for (std::size_t h : config_.value_hidden) desc += std::to_string(h) + ",";
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : desc) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

NetBinding bind(Graph& graph, const PolicyValueNet& net, BindParts parts) {
  NetBinding binding;
  const auto& params = net.parameters();
  if (parts != BindParts::value) {
    for (std::size_t i = 0; i < net.policy_tensor_count(); ++i) binding.policy.push_back(graph.variable(params[i]));
  }
  if (parts != BindParts::policy) {
    for (std::size_t i = net.policy_tensor_count(); i < params.size(); ++i) {
      binding.value.push_back(graph.variable(params[i]));
    }
  }
  return binding;
}

DistOutput forward_policy(const PolicyValueNet& net, const NetBinding& binding, Var states) {
  if (binding.policy.size() != net.policy_tensor_count()) throw ParameterError("policy parameters are not bound");
  const NetworkConfig& cfg = net.config();
  const std::size_t mlp_tensors = 2 * net.policy_spec().layer_count();
  const std::span<const Var> policy(binding.policy);
  const Var out = mlp_forward(as_batch(states, cfg.observation_dim), policy.subspan(0, mlp_tensors));
  std::size_t extra = mlp_tensors;
  const HeadConfig& head = cfg.head;
  switch (head.kind) {
    case HeadKind::gaussian:
    case HeadKind::gaussian_tanh:
      return gaussian_head(out, policy[extra], head.kind == HeadKind::gaussian_tanh);
    case HeadKind::beta:
      return beta_head(out);
    default:
      break;
  }
  Temperature temperature = head.temperature;
  if (head.learned_temperature) temperature = clamp(policy[extra], head.temperature_min, head.temperature_max);
  switch (head.kind) {
    case HeadKind::gibbs:
      return gibbs_head(out, cfg.action_dims, head.bins, temperature);
    case HeadKind::ordinal:
      return ordinal_head(out, cfg.action_dims, head.bins, temperature, head.probability_floor);
    default:
      return unimodal_head(softplus(out), ActionGrid(cfg.action_dims, head.bins), temperature,
                           head.probability_floor);
  }
}

Var forward_value(const PolicyValueNet& net, const NetBinding& binding, Var states) {
  if (binding.value.size() != net.parameters().size() - net.policy_tensor_count()) {
    throw ParameterError("value parameters are not bound");
  }
  const Var out = mlp_forward(as_batch(states, net.config().observation_dim), binding.value);
  return reshape(out, Shape{out.value().rows()});
}

std::vector<double> collect_gradients(const Graph& graph, const NetBinding& binding, const PolicyValueNet& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  const auto& params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool is_policy = i < net.policy_tensor_count();
    const auto& group = is_policy ? binding.policy : binding.value;
    const std::size_t k = is_policy ? i : i - net.policy_tensor_count();
    if (group.empty()) {
      flat.insert(flat.end(), params[i].size(), 0.0);
    } else {
      const Tensor& g = graph.grad(group[k]);
      flat.insert(flat.end(), g.data().begin(), g.data().end());
    }
  }
  return flat;
}

void save_checkpoint(const PolicyValueNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  write_u32(out, kCheckpointVersion);
  write_u64(out, net.spec_hash());
  const std::vector<double> flat = net.flat_parameters();
  write_u64(out, flat.size());
  for (double v : flat) write_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw ParameterError("failed writing checkpoint " + path.string());
}

void load_checkpoint(PolicyValueNet& net, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open checkpoint: " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw ParameterError("not a checkpoint file: " + path.string());
  const auto version = static_cast<std::uint32_t>(read_le(in, 4));
  if (version != kCheckpointVersion) throw ParameterError("unsupported checkpoint version " + std::to_string(version));
  if (read_le(in, 8) != net.spec_hash()) throw ParameterError("checkpoint was written for a different architecture");
  const std::uint64_t count = read_le(in, 8);
  if (count != net.parameter_count()) throw ParameterError("checkpoint parameter count mismatch");
  std::vector<double> flat(count);
  for (double& v : flat) v = std::bit_cast<double>(read_le(in, 8));
  net.set_flat_parameters(flat);
}

}  // namespace upg
