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

#include "upg/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "upg/errors.hpp"

namespace upg {

std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& cli_out,
                                         const std::filesystem::path& config_out) {
  if (cli_out && !cli_out->empty()) return *cli_out;
  if (const char* env = std::getenv("UNIMODAL_PG_OUT"); env && *env) return env;
  return config_out;
}

std::string run_file_stem(const Variant& variant, std::uint64_t seed) {
  return fmt::format("{}_seed{}", variant.name, seed);
}

void write_run_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << kRunCsvHeader << '\n';
  for (const RunRecord& r : records) {
    out << fmt::format("{},{},{},{},{},{}\n", r.step, r.mean_return, r.std_return, r.entropy, r.kl, r.clip_frac);
  }
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryCsvHeader << '\n';
  for (const SummaryRow& r : rows) {
    const HeadConfig& h = r.variant.head;
    std::string bins;
    std::string tau;
    if (is_discrete(h.kind)) {
      bins = std::to_string(h.bins);
      tau = h.learned_temperature ? "learned" : fmt::format("{}", h.temperature);
    }
    out << fmt::format("{},{},{},{},{},{},{}\n", r.variant.name, to_string(h.kind), bins, tau, r.seed_count,
                       r.mean_last20, r.std_last20);
  }
}

std::vector<SummaryRow> summarize(std::span<const Variant> variants, std::span<const CellOutcome> cells) {
  std::vector<SummaryRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<double> finals;
    for (const CellOutcome& c : cells) {
      if (c.variant == v && c.ok()) finals.push_back(last_n_mean(c.records, 20));
    }
    SummaryRow row{variants[v], finals.size(), 0.0, 0.0};
    if (!finals.empty()) {
      for (double f : finals) row.mean_last20 += f;
      row.mean_last20 /= static_cast<double>(finals.size());
      double ss = 0.0;
      for (double f : finals) ss += (f - row.mean_last20) * (f - row.mean_last20);
      row.std_last20 = std::sqrt(ss / static_cast<double>(finals.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_file(const std::filesystem::path& path, const auto& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  writer(out);
  if (!out) throw Error(fmt::format("write to '{}' failed", path.string()));
}

}  // namespace

MatrixResult run_matrix(const ExperimentConfig& config, std::span<const Variant> variants,
                        const RunnerOptions& options) {
  config.validate();
  MatrixResult result;
  result.variants.assign(variants.begin(), variants.end());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::uint64_t seed : config.seeds) {
      CellOutcome cell;
      cell.variant = v;
      cell.seed = seed;
      cell.run_seed = cell_seed(config.master_seed, seed);
      result.cells.push_back(std::move(cell));
    }
  }

  const std::filesystem::path runs = options.out / "runs";
  const std::filesystem::path checkpoints = options.out / "checkpoints";
  std::filesystem::create_directories(runs);
  if (options.checkpoints) std::filesystem::create_directories(checkpoints);

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  const std::size_t total = result.cells.size();

  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      CellOutcome& cell = result.cells[i];
      const Variant& variant = variants[cell.variant];
      const std::string stem = run_file_stem(variant, cell.seed);
      const auto start = std::chrono::steady_clock::now();
      try {
        RunResult run = train_run(make_run_spec(config, variant, cell.seed));
        cell.records = std::move(run.records);
        cell.csv = runs / (stem + ".csv");
        write_file(cell.csv, [&](std::ostream& out) { write_run_csv(out, cell.records); });
        if (options.checkpoints) save_checkpoint(run.net, checkpoints / (stem + ".ckpt"));
      } catch (const std::exception& e) {
        cell.error = e.what();
        if (cell.error.empty()) cell.error = "unknown error";
      }
      cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const std::size_t n = ++done;
      if (!options.quiet || !cell.ok()) {
        std::lock_guard lock(log_mutex);
        if (cell.ok()) {
          fmt::print(stderr, "[{}/{}] {} seed {}: last-20 return {:.2f} ({:.1f} s)\n", n, total, variant.name,
                     cell.seed, last_n_mean(cell.records, 20), cell.wall_seconds);
        } else {
          fmt::print(stderr, "[{}/{}] {} seed {}: FAILED: {}\n", n, total, variant.name, cell.seed, cell.error);
        }
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, total));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  for (const CellOutcome& c : result.cells) result.failed += c.ok() ? 0 : 1;
  result.summary = summarize(variants, result.cells);
  result.summary_csv = options.out / "summary.csv";
  write_file(result.summary_csv, [&](std::ostream& out) { write_summary_csv(out, result.summary); });
  return result;
}

MatrixResult run_matrix(const ExperimentConfig& config, const RunnerOptions& options) {
  const std::vector<Variant> variants = expand_variants(config);
  return run_matrix(config, variants, options);
}

}  // namespace upg
