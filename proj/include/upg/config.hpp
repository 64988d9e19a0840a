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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "upg/heads.hpp"
#include "upg/network.hpp"
#include "upg/rl.hpp"
#include "upg/variance.hpp"

namespace upg {

// TOML subset: [section] headers, key = value, '#' comments, basic strings,
// integers, floats, booleans and (possibly multi-line) arrays of those.
struct TomlValue;
using TomlArray = std::vector<TomlValue>;
struct TomlValue {
  std::variant<bool, std::int64_t, double, std::string, TomlArray> data;
  std::size_t line = 0;

  bool is_array() const { return std::holds_alternative<TomlArray>(data); }
  std::string type_name() const;
};

struct TomlEntry {
  std::string key;
  TomlValue value;
};

struct TomlTable {
  std::string name;  // empty for the root table
  std::size_t line = 0;
  std::vector<TomlEntry> entries;
};

// Root table first, then sections in file order. Throws ConfigError("source:line: ...").
std::vector<TomlTable> parse_toml(std::string_view text, std::string_view source = "<string>");

struct TauChoice {
  bool learned = false;
  std::optional<double> value;  // unset: the head's default temperature
};

struct Variant {
  std::string name;
  HeadConfig head;
};

struct ExperimentConfig {
  std::string env = "pendulum";
  std::vector<HeadKind> heads{HeadKind::unimodal};
  std::vector<std::size_t> bins{11};
  std::vector<TauChoice> taus{TauChoice{}};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t master_seed = 0;
  std::filesystem::path out = "results";
  TrainConfig train;
  EvalConfig eval;
  std::vector<std::size_t> policy_hidden{64, 64};
  std::vector<std::size_t> value_hidden{64, 64};
  double initial_log_std = 0.0;
  double tau_min = 1.5;
  double tau_max = 3.0;
  VarianceConfig variance;

  // Throws ConfigError listing every violation.
  void validate() const;
};

ExperimentConfig parse_config(std::string_view text, std::string_view source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Discrete heads expand over K x tau; continuous heads give one variant each.
std::vector<Variant> expand_variants(const ExperimentConfig& config);

// Seed of one cell; shared by every variant so heads see the same start states.
std::uint64_t cell_seed(std::uint64_t master_seed, std::uint64_t seed);

RunSpec make_run_spec(const ExperimentConfig& config, const Variant& variant, std::uint64_t seed);

}  // namespace upg
