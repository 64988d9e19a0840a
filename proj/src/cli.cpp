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

#include "upg/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "upg/config.hpp"
#include "upg/envs.hpp"
#include "upg/errors.hpp"
#include "upg/gradcheck.hpp"
#include "upg/network.hpp"
#include "upg/runner.hpp"
#include "upg/variance.hpp"

namespace upg {
namespace {

struct Options {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t jobs = 1;
  bool quiet = false;
  std::string checkpoint;
  std::optional<std::size_t> episodes;
  std::size_t cases = 100;
};

ExperimentConfig configure(const Options& o) {
  ExperimentConfig c = o.config ? load_config(*o.config) : ExperimentConfig{};
  if (o.seed) {
    c.master_seed = *o.seed;
    c.variance.master_seed = *o.seed;
  }
  std::optional<std::filesystem::path> out;
  if (o.out) out = *o.out;
  c.out = resolve_output_dir(out, c.out);
  c.validate();
  return c;
}

RunnerOptions runner_options(const ExperimentConfig& c, const Options& o) {
  RunnerOptions r;
  r.out = c.out;
  r.jobs = o.jobs;
  r.quiet = o.quiet;
  return r;
}

int report_matrix(const MatrixResult& m, const Options& o, std::ostream& out, std::ostream& err) {
  if (!o.quiet) {
    out << fmt::format("{:<28} {:>5} {:>12} {:>10}\n", "variant", "seeds", "last-20 mean", "std");
    for (const SummaryRow& r : m.summary) {
      out << fmt::format("{:<28} {:>5} {:>12.2f} {:>10.2f}\n", r.variant.name, r.seed_count, r.mean_last20,
                         r.std_last20);
    }
    out << "summary: " << m.summary_csv.string() << '\n';
  }
  if (m.failed > 0) {
    err << fmt::format("{} of {} cells failed\n", m.failed, m.cells.size());
    return 1;
  }
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = configure(o);
  const std::vector<Variant> variants = expand_variants(c);
  if (variants.size() != 1) {
    err << fmt::format("train runs one variant but the config expands to {}; use sweep\n", variants.size());
    return 1;
  }
  return report_matrix(run_matrix(c, variants, runner_options(c, o)), o, out, err);
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = configure(o);
  return report_matrix(run_matrix(c, runner_options(c, o)), o, out, err);
}

int cmd_variance(const Options& o, std::ostream& out, std::ostream&) {
  const ExperimentConfig c = configure(o);
  const VarianceSweep sweep = init_variance_sweep(c.variance);
  std::filesystem::create_directories(c.out);
  const std::filesystem::path rows = c.out / "variance.csv";
  const std::filesystem::path summary = c.out / "variance_summary.csv";
  {
    std::ofstream f(rows, std::ios::binary);
    write_variance_csv(f, sweep.rows);
    if (!f) throw Error(fmt::format("write to '{}' failed", rows.string()));
  }
  {
    std::ofstream f(summary, std::ios::binary);
    write_variance_summary_csv(f, sweep.reports);
    if (!f) throw Error(fmt::format("write to '{}' failed", summary.string()));
  }
  if (!o.quiet) {
    out << fmt::format("{:<10} {:>4} {:>14} {:>30} {:>12} {:>10}\n", "head", "K", "E[V] exact", "95% CI", "E[V] MC",
                       "max|p-1/K|");
    for (const VarianceReport& r : sweep.reports) {
      out << fmt::format("{:<10} {:>4} {:>14.6g} {:>30} {:>12.6g} {:>10.4f}\n", to_string(r.head), r.bins,
                         r.mean_exact, fmt::format("[{:.6g}, {:.6g}]", r.ci_low, r.ci_high), r.mean_mc,
                         r.max_uniform_deviation);
    }
    out << "rows: " << rows.string() << "\nsummary: " << summary.string() << '\n';
  }
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = o.seed.value_or(0);
  const std::vector<GradCheckResult> results = run_gradcheck_suite(seed, o.cases);
  std::size_t failed = 0;
  for (const GradCheckResult& r : results) {
    if (!r.passed) ++failed;
    if (!o.quiet || !r.passed) {
      out << fmt::format("{:<4} {:<32} cases={:<4} coords={:<7} max_rel_err={:.3e}\n", r.passed ? "ok" : "FAIL",
                         r.name, r.cases, r.coordinates, r.max_relative_error);
    }
  }
  if (failed > 0) {
    err << fmt::format("{} of {} gradient checks failed\n", failed, results.size());
    return 1;
  }
  if (!o.quiet) out << fmt::format("all {} gradient checks passed\n", results.size());
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = configure(o);
  const std::vector<Variant> variants = expand_variants(c);
  if (variants.size() != 1) {
    err << "eval needs a config that describes exactly one variant\n";
    return 1;
  }
  const std::unique_ptr<Env> env = make_env(c.env);
  RunSpec spec = make_run_spec(c, variants.front(), c.seeds.front());
  spec.network.observation_dim = env->observation_dim();
  spec.network.action_dims = env->action_dims();
  PolicyValueNet net(spec.network);
  load_checkpoint(net, o.checkpoint);
  EvalConfig eval = c.eval;
  if (o.episodes) eval.episodes = *o.episodes;
  const EvalResult r = evaluate_policy(net, *env, eval);
  out << fmt::format("{} on {}: mean return {:.4f} std {:.4f} over {} episodes\n", variants.front().name, c.env,
                     r.mean_return, r.std_return, r.returns.size());
  return 0;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete and continuous policy heads for policy-gradient RL", "unimodal-pg"};
  app.fallthrough();
  app.require_subcommand(1, 1);

  Options o;
  app.add_option("--config", o.config, "TOML experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed (overrides the config)");
  app.add_option("--out", o.out, "output directory (overrides $UNIMODAL_PG_OUT and the config)");
  app.add_option("--jobs", o.jobs, "cells to run concurrently")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", o.quiet, "only report failures");

  CLI::App* train = app.add_subcommand("train", "train one variant over the configured seeds");
  CLI::App* sweep = app.add_subcommand("sweep", "train every (variant x seed) cell of the config");
  CLI::App* variance = app.add_subcommand("variance", "init-variance sweep on the one-step bandit");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every primitive and head");
  gradcheck->add_option("--cases", o.cases, "random cases per entry")->check(CLI::PositiveNumber);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", o.episodes, "evaluation episodes")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(o, out, err);
    if (sweep->parsed()) return cmd_sweep(o, out, err);
    if (variance->parsed()) return cmd_variance(o, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, out, err);
}

}  // namespace upg
