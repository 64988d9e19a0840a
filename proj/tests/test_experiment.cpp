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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "upg/cli.hpp"
#include "upg/config.hpp"
#include "upg/errors.hpp"
#include "upg/runner.hpp"

namespace upg {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("upg_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "cfg.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

// Small enough for unit tests: 3 evaluations per run.
const char* kTinyRun = R"(
env = "pendulum"
seeds = [3, 7]

[train]
total_steps = 512
steps_per_batch = 256
epochs = 2

[eval]
interval = 256
episodes = 1

[network]
policy_hidden = [8]
value_hidden = [8]
)";

TEST(Toml, ScalarsArraysAndComments) {
  const auto tables = parse_toml(R"(
a = 1          # int
b = -2.5e-3
c = "x # not a comment"
d = true
e = [1, 2.0, "s",]
f = [
  10,  # first
  20,
]
g = 150_000

[sec]
h = false
)");
  ASSERT_EQ(tables.size(), 2u);
  const auto& root = tables[0].entries;
  ASSERT_EQ(root.size(), 7u);
  EXPECT_EQ(std::get<std::int64_t>(root[0].value.data), 1);
  EXPECT_DOUBLE_EQ(std::get<double>(root[1].value.data), -2.5e-3);
  EXPECT_EQ(std::get<std::string>(root[2].value.data), "x # not a comment");
  EXPECT_TRUE(std::get<bool>(root[3].value.data));
  EXPECT_EQ(std::get<TomlArray>(root[4].value.data).size(), 3u);
  const auto& f = std::get<TomlArray>(root[5].value.data);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(std::get<std::int64_t>(f[1].data), 20);
  EXPECT_EQ(root[5].value.line, 7u);
  EXPECT_EQ(std::get<std::int64_t>(root[6].value.data), 150000);
  EXPECT_EQ(tables[1].name, "sec");
  EXPECT_EQ(tables[1].entries[0].value.line, 14u);
}

TEST(Toml, ErrorsCarryLineNumbers) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"a = 1\nb = \n", "src:2:"},
      {"a = 1\n\na = 2\n", "src:3: duplicate key"},
      {"x = [1, 2\n", "src:1: unterminated array"},
      {"\n\ns = \"abc\n", "src:3: unterminated string"},
      {"[t]\n[t]\n", "src:2: duplicate section"},
      {"just words\n", "src:1: expected"},
      {"v = 1.2.3\n", "src:1: invalid value"},
      {"[bad\n", "src:1: malformed section"},
  };
  for (const auto& [text, expected] : cases) {
    try {
      parse_toml(text, "src");
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(expected), std::string::npos) << e.what();
    }
  }
}

TEST(Config, MinimalConfigFillsDefaults) {
  const ExperimentConfig c = parse_config("env = \"pointmass-1d\"\nhead = \"gibbs\"\n");
  const ExperimentConfig d;
  EXPECT_EQ(c.env, "pointmass-1d");
  ASSERT_EQ(c.heads.size(), 1u);
  EXPECT_EQ(c.heads[0], HeadKind::gibbs);
  EXPECT_EQ(c.bins, d.bins);
  EXPECT_EQ(c.seeds, d.seeds);
  EXPECT_EQ(c.train.learning_rate, d.train.learning_rate);
  EXPECT_EQ(c.train.epochs, d.train.epochs);
  EXPECT_EQ(c.eval.interval, d.eval.interval);
  EXPECT_EQ(c.policy_hidden, d.policy_hidden);
  const auto v = expand_variants(c);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].name, "gibbs-K11-tau1.5");
}

TEST(Config, AllKeysRoundTrip) {
  const ExperimentConfig c = parse_config(R"(
env = "pointmass-2d"
head = ["unimodal", "gaussian"]
K = [5, 9]
tau = [2.0, "learned"]
algorithm = "pg"
seeds = [4, 5]
master_seed = 9
out = "res"
[train]
gamma = 0.9
lambda = 1
clip_ratio = 0.1
epochs = 3
minibatch_size = 32
learning_rate = 2e-5
entropy_coef = 0.01
value_coef = 1.0
max_grad_norm = 0
normalize_advantages = false
reward_scale = 0.1
steps_per_batch = 128
total_steps = 1024
[eval]
interval = 64
episodes = 3
seed = 1
stochastic = true
[network]
policy_hidden = [16, 16, 16]
value_hidden = [32]
initial_log_std = -0.5
tau_min = 1.0
tau_max = 4.0
[variance]
heads = ["gibbs"]
K = [2]
tau = 1.0
inits = 7
samples = 50
reward = 2.0
hidden = []
)");
  EXPECT_EQ(c.train.algorithm, Algorithm::pg);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.master_seed, 9u);
  EXPECT_EQ(c.variance.master_seed, 9u);
  EXPECT_EQ(c.out, fs::path("res"));
  EXPECT_DOUBLE_EQ(c.train.lambda, 1.0);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 2e-5);
  EXPECT_FALSE(c.train.normalize_advantages);
  EXPECT_EQ(c.train.total_steps, 1024u);
  EXPECT_TRUE(c.eval.stochastic);
  EXPECT_EQ(c.policy_hidden, (std::vector<std::size_t>{16, 16, 16}));
  EXPECT_DOUBLE_EQ(c.initial_log_std, -0.5);
  EXPECT_TRUE(c.variance.hidden.empty());
  EXPECT_EQ(c.variance.inits, 7u);

  const auto v = expand_variants(c);
  ASSERT_EQ(v.size(), 5u);  // 2 K x 2 tau for unimodal, 1 for gaussian
  EXPECT_EQ(v[0].name, "unimodal-K5-tau2");
  EXPECT_EQ(v[1].name, "unimodal-K5-taulearned");
  EXPECT_TRUE(v[1].head.learned_temperature);
  EXPECT_DOUBLE_EQ(v[1].head.temperature, 2.5);
  EXPECT_DOUBLE_EQ(v[1].head.temperature_max, 4.0);
  EXPECT_EQ(v[4].name, "gaussian");
}

TEST(Config, ZeroBinsRejected) {
  EXPECT_NE(config_error("head = \"ordinal\"\nK = 0\n").find("K must be at least 1"), std::string::npos);
  EXPECT_NE(config_error("K = [3, 0]\n").find("K must be at least 1"), std::string::npos);
}

TEST(Config, DuplicateSeedsRejected) {
  EXPECT_NE(config_error("seeds = [1, 2, 1]\n").find("seeds must be distinct"), std::string::npos);
  EXPECT_NE(config_error("seeds = []\n").find("must not be empty"), std::string::npos);
}

TEST(Config, UnknownKeysRejectedWithLine) {
  const std::string e = config_error("env = \"pendulum\"\n\n[train]\nlearning_rat = 1e-3\n[extra]\n");
  EXPECT_NE(e.find("cfg.toml:4: unknown key 'learning_rat' in [train]"), std::string::npos) << e;
  EXPECT_NE(e.find("cfg.toml:5: unknown section [extra]"), std::string::npos) << e;
}

TEST(Config, ListsEveryViolation) {
  const std::string e = config_error(R"(
env = "cartpole"
head = "softmax"
seeds = [1, 1]
[train]
gamma = 1.0
epochs = "ten"
)");
  EXPECT_NE(e.find("cfg.toml:3: unknown head 'softmax'"), std::string::npos) << e;
  EXPECT_NE(e.find("cfg.toml:7: 'epochs' must be an integer, got string"), std::string::npos) << e;
  // Type errors stop before semantic validation.
  const std::string s = config_error("env = \"cartpole\"\nseeds = [1, 1]\n[train]\ngamma = 1.0\n[eval]\ninterval = 0\n");
  EXPECT_NE(s.find("unknown env 'cartpole'"), std::string::npos) << s;
  EXPECT_NE(s.find("seeds must be distinct"), std::string::npos) << s;
  EXPECT_NE(s.find("gamma must be in [0, 1)"), std::string::npos) << s;
  EXPECT_NE(s.find("eval interval must be at least 1"), std::string::npos) << s;
}

TEST(Config, TauChoices) {
  EXPECT_NE(config_error("tau = \"auto\"\n").find("tau must be a number or \"learned\""), std::string::npos);
  EXPECT_NE(config_error("tau = -1\n").find("tau must be positive"), std::string::npos);
  EXPECT_NE(config_error("tau = [2, 2.0]\n").find("tau values must be distinct"), std::string::npos);
  EXPECT_NE(config_error("seeds = -1\n").find("must be at least 0"), std::string::npos);
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  write_text(dir.path() / "a.toml", "head = \"beta\"\n");
  EXPECT_EQ(load_config(dir.path() / "a.toml").heads[0], HeadKind::beta);
  EXPECT_THROW(load_config(dir.path() / "missing.toml"), ConfigError);
  write_text(dir.path() / "b.toml", "\nhead = 3\n");
  try {
    load_config(dir.path() / "b.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("b.toml:2:"), std::string::npos);
  }
}

TEST(Config, CellSeedsAreSharedAcrossVariants) {
  ExperimentConfig c;
  c.heads = {HeadKind::unimodal, HeadKind::gibbs};
  const auto v = expand_variants(c);
  EXPECT_EQ(make_run_spec(c, v[0], 3).seed, make_run_spec(c, v[1], 3).seed);
  EXPECT_NE(make_run_spec(c, v[0], 3).seed, make_run_spec(c, v[0], 4).seed);
  c.master_seed = 1;
  EXPECT_NE(make_run_spec(c, v[0], 3).seed, cell_seed(0, 3));
}

TEST(Runner, CsvHeadersAreFixed) {
  EXPECT_STREQ(kRunCsvHeader, "step,mean_return,std_return,entropy,kl,clip_frac");
  EXPECT_STREQ(kSummaryCsvHeader, "variant,head,K,tau,seed_count,mean_last20,std_last20");
}

TEST(Runner, OutputDirPrecedence) {
  ::unsetenv("UNIMODAL_PG_OUT");
  EXPECT_EQ(resolve_output_dir(std::nullopt, "cfg"), fs::path("cfg"));
  ::setenv("UNIMODAL_PG_OUT", "envdir", 1);
  EXPECT_EQ(resolve_output_dir(std::nullopt, "cfg"), fs::path("envdir"));
  EXPECT_EQ(resolve_output_dir(fs::path("cli"), "cfg"), fs::path("cli"));
  ::unsetenv("UNIMODAL_PG_OUT");
}

TEST(Runner, SummaryOfHandValues) {
  std::vector<Variant> variants(2);
  variants[0].name = "a";
  variants[1].name = "b";
  std::vector<CellOutcome> cells(3);
  cells[0].variant = 0;
  cells[0].records = {{0, -10.0}, {1, -4.0}};
  cells[1].variant = 0;
  cells[1].records = {{0, -2.0}};
  cells[2].variant = 1;
  cells[2].error = "boom";
  const auto rows = summarize(variants, cells);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].seed_count, 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean_last20, (-7.0 + -2.0) / 2.0);
  EXPECT_DOUBLE_EQ(rows[0].std_last20, 2.5);
  EXPECT_EQ(rows[1].seed_count, 0u);
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* header = nullptr) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) row.push_back(std::stod(f));
    rows.push_back(row);
  }
  return rows;
}

TEST(Runner, MatrixFilesDeterminismAndSummaryOracle) {
  TempDir dir;
  ExperimentConfig c = parse_config(kTinyRun);
  c.heads = {HeadKind::unimodal, HeadKind::gaussian};
  RunnerOptions opt;
  opt.quiet = true;
  opt.out = dir.path() / "one";
  const MatrixResult a = run_matrix(c, opt);
  EXPECT_EQ(a.failed, 0u);
  ASSERT_EQ(a.cells.size(), 4u);
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(opt.out / "runs")) csvs += e.path().extension() == ".csv";
  EXPECT_EQ(csvs, 4u);
  EXPECT_TRUE(fs::exists(opt.out / "summary.csv"));
  EXPECT_TRUE(fs::exists(opt.out / "checkpoints" / "gaussian_seed7.ckpt"));

  // Recompute the summary from the run CSVs on disk.
  for (const SummaryRow& row : a.summary) {
    std::vector<double> finals;
    for (std::uint64_t seed : c.seeds) {
      std::string header;
      const auto rows = read_csv(opt.out / "runs" / (run_file_stem(row.variant, seed) + ".csv"), &header);
      EXPECT_EQ(header, kRunCsvHeader);
      ASSERT_EQ(rows.size(), 3u);
      for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(rows[i][0], rows[i - 1][0]);
      double s = 0.0;
      for (const auto& r : rows) s += r[1];
      finals.push_back(s / static_cast<double>(rows.size()));
    }
    const double mean = (finals[0] + finals[1]) / 2.0;
    EXPECT_NEAR(row.mean_last20, mean, 1e-9 * std::abs(mean));
    EXPECT_NEAR(row.std_last20, std::abs(finals[0] - finals[1]) / 2.0, 1e-9 * std::abs(mean));
  }

  opt.out = dir.path() / "two";
  opt.jobs = 3;
  const MatrixResult b = run_matrix(c, opt);
  EXPECT_EQ(read_file(dir.path() / "one" / "summary.csv"), read_file(dir.path() / "two" / "summary.csv"));
  for (const auto& e : fs::directory_iterator(dir.path() / "one" / "runs")) {
    EXPECT_EQ(read_file(e.path()), read_file(dir.path() / "two" / "runs" / e.path().filename())) << e.path();
  }
}

TEST(Runner, FailedCellIsRecordedAndSkipped) {
  TempDir dir;
  ExperimentConfig c = parse_config(kTinyRun);
  c.seeds = {1};
  std::vector<Variant> variants = expand_variants(c);
  Variant broken = variants[0];
  broken.name = "broken";
  broken.head.temperature = -1.0;
  variants.push_back(broken);
  RunnerOptions opt;
  opt.quiet = true;
  opt.out = dir.path();
  testing::internal::CaptureStderr();
  const MatrixResult m = run_matrix(c, variants, opt);
  const std::string log = testing::internal::GetCapturedStderr();
  EXPECT_EQ(m.failed, 1u);
  EXPECT_TRUE(m.cells[0].ok());
  EXPECT_FALSE(m.cells[1].ok());
  EXPECT_NE(log.find("broken seed 1: FAILED"), std::string::npos);
  ASSERT_EQ(m.summary.size(), 2u);
  EXPECT_EQ(m.summary[1].seed_count, 0u);
  EXPECT_FALSE(fs::exists(dir.path() / "runs" / "broken_seed1.csv"));
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "unimodal-pg");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, UsageErrorsExitTwo) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"launch"}, {"train", "--bogus"}, {"--jobs", "0", "gradcheck"}, {"eval"}, {"train", "--config", "/nonexistent.toml"}}) {
    const CliRun r = cli(args);
    EXPECT_EQ(r.code, 2) << (args.empty() ? "" : args[0]);
    EXPECT_NE(r.err.find("Usage:"), std::string::npos);
  }
  const CliRun help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("gradcheck"), std::string::npos);
}

TEST(Cli, GradcheckPasses) {
  const CliRun r = cli({"gradcheck", "--cases", "10"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("gradient checks passed"), std::string::npos);
}

TEST(Cli, VarianceWritesSchema) {
  TempDir dir;
  write_text(dir.path() / "v.toml", "[variance]\nheads = [\"unimodal\"]\nK = [3, 4]\ninits = 3\nsamples = 100\n");
  const CliRun r = cli({"variance", "--config", (dir.path() / "v.toml").string(), "--out", (dir.path() / "o").string(), "--quiet"});
  EXPECT_EQ(r.code, 0) << r.err;
  std::istringstream in(read_file(dir.path() / "o" / "variance.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "head,K,tau,init_seed,exact_variance,mc_variance,mc_stderr");
  std::size_t rows = 0;
  for (; std::getline(in, line); ++rows) EXPECT_EQ(line.rfind("unimodal,", 0), 0u);
  EXPECT_EQ(rows, 6u);
}

TEST(Cli, TrainPendulumUnimodalAndEval) {
  TempDir dir;
  write_text(dir.path() / "t.toml", std::string(kTinyRun) + "\n");
  const std::string cfg = (dir.path() / "t.toml").string();
  const std::string out = (dir.path() / "o").string();
  const CliRun r = cli({"train", "--config", cfg, "--out", out, "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string header;
  const auto rows = read_csv(dir.path() / "o" / "runs" / "unimodal-K11-tau2.5_seed3.csv", &header);
  EXPECT_EQ(header, kRunCsvHeader);
  ASSERT_GE(rows.size(), 2u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(rows[i][0], rows[i - 1][0]);

  const std::string ckpt = (dir.path() / "o" / "checkpoints" / "unimodal-K11-tau2.5_seed3.ckpt").string();
  const CliRun e = cli({"eval", "--config", cfg, "--checkpoint", ckpt, "--episodes", "2"});
  EXPECT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("over 2 episodes"), std::string::npos);

  // The seed flag changes every cell seed.
  const CliRun s = cli({"train", "--config", cfg, "--out", out + "_s", "--seed", "5", "--quiet"});
  ASSERT_EQ(s.code, 0);
  EXPECT_NE(read_file(dir.path() / "o" / "checkpoints" / "unimodal-K11-tau2.5_seed3.ckpt"),
            read_file(dir.path() / "o_s" / "checkpoints" / "unimodal-K11-tau2.5_seed3.ckpt"));
}

TEST(Cli, TrainRejectsMultipleVariants) {
  TempDir dir;
  write_text(dir.path() / "t.toml", "head = [\"gibbs\", \"beta\"]\n" + std::string(kTinyRun));
  const CliRun r = cli({"train", "--config", (dir.path() / "t.toml").string(), "--out", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("use sweep"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitOne) {
  TempDir dir;
  write_text(dir.path() / "bad.toml", "K = 0\n");
  const CliRun r = cli({"sweep", "--config", (dir.path() / "bad.toml").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("K must be at least 1"), std::string::npos);
}

}  // namespace
}  // namespace upg
