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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upg/config.hpp"
#include "upg/rl.hpp"

namespace upg {

inline constexpr const char* kRunCsvHeader = "step,mean_return,std_return,entropy,kl,clip_frac";
inline constexpr const char* kSummaryCsvHeader = "variant,head,K,tau,seed_count,mean_last20,std_last20";

struct RunnerOptions {
  std::filesystem::path out = "results";
  std::size_t jobs = 1;
  bool quiet = false;
  bool checkpoints = true;
};

struct CellOutcome {
  std::size_t variant = 0;  // index into the variant list
  std::uint64_t seed = 0;
  std::uint64_t run_seed = 0;
  std::vector<RunRecord> records;
  std::filesystem::path csv;
  std::string error;  // empty on success
  double wall_seconds = 0.0;

  bool ok() const { return error.empty(); }
};

struct SummaryRow {
  Variant variant;
  std::size_t seed_count = 0;
  double mean_last20 = 0.0;
  double std_last20 = 0.0;  // population std across seeds
};

struct MatrixResult {
  std::vector<Variant> variants;
  std::vector<CellOutcome> cells;  // variant-major, seeds in config order
  std::vector<SummaryRow> summary;
  std::filesystem::path summary_csv;
  std::size_t failed = 0;
};

// --out, then $UNIMODAL_PG_OUT, then the config value.
std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& cli_out,
                                         const std::filesystem::path& config_out);

std::string run_file_stem(const Variant& variant, std::uint64_t seed);

void write_run_csv(std::ostream& out, std::span<const RunRecord> records);
void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);

// Successful cells only; variants with no successful cell get seed_count 0.
std::vector<SummaryRow> summarize(std::span<const Variant> variants, std::span<const CellOutcome> cells);

// Every (variant x seed) cell; up to options.jobs cells at once. Writes
// <out>/runs/<stem>.csv, <out>/checkpoints/<stem>.ckpt and <out>/summary.csv.
// A cell that throws is recorded and counted in `failed`.
MatrixResult run_matrix(const ExperimentConfig& config, std::span<const Variant> variants,
                        const RunnerOptions& options);
MatrixResult run_matrix(const ExperimentConfig& config, const RunnerOptions& options);

}  // namespace upg
