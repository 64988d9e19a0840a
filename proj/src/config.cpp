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

#include "upg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "upg/envs.hpp"
#include "upg/errors.hpp"
#include "upg/rng.hpp"

namespace upg {

std::string TomlValue::type_name() const {
  switch (data.index()) {
    case 0:
      return "boolean";
    case 1:
      return "integer";
    case 2:
      return "float";
    case 3:
      return "string";
    default:
      return "array";
  }
}

namespace {

bool is_bare_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops a trailing comment and adds the bracket balance of the rest to depth.
std::string_view strip_comment(std::string_view line, int& depth) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '#') return line.substr(0, i);
    else if (c == '[') ++depth;
    else if (c == ']') --depth;
  }
  return line;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::string_view source, std::size_t line)
      : text_(text), source_(source), line_(line) {}

  TomlValue parse() {
    TomlValue v = value();
    skip_ws();
    if (pos_ != text_.size()) fail(fmt::format("unexpected trailing text '{}'", text_.substr(pos_)));
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(fmt::format("{}:{}: {}", source_, line_, what));
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                   text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  TomlValue value() {
    skip_ws();
    if (pos_ >= text_.size()) fail("missing value");
    TomlValue v;
    v.line = line_;
    const char c = text_[pos_];
    if (c == '"') {
      v.data = string();
    } else if (c == '[') {
      v.data = array();
    } else if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      v.data = true;
    } else if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      v.data = false;
    } else {
      number(v);
    }
    return v;
  }

  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size()) {
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c == '\n') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= text_.size()) break;
      switch (const char e = text_[pos_++]) {
        case '"':
        case '\\':
          out += e;
          break;
        case 'n':
          out += '\n';
          break;
        case 't':
          out += '\t';
          break;
        default:
          fail(fmt::format("unsupported escape '\\{}'", e));
      }
    }
    fail("unterminated string");
  }

  TomlArray array() {
    ++pos_;
    TomlArray out;
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
      } else if (pos_ < text_.size() && text_[pos_] != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  void number(TomlValue& v) {
    std::size_t end = pos_;
    while (end < text_.size() && text_[end] != ',' && text_[end] != ']' && text_[end] != ' ' &&
           text_[end] != '\t' && text_[end] != '\n') {
      ++end;
    }
    const std::string_view raw = text_.substr(pos_, end - pos_);
    std::string digits;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '_') {
        if (i == 0 || i + 1 == raw.size() || !std::isdigit(static_cast<unsigned char>(raw[i - 1])) ||
            !std::isdigit(static_cast<unsigned char>(raw[i + 1]))) {
          fail(fmt::format("invalid value '{}'", raw));
        }
        continue;
      }
      digits += raw[i];
    }
    std::string_view d = digits;
    if (!d.empty() && d.front() == '+') d.remove_prefix(1);
    const char* first = d.data();
    const char* last = d.data() + d.size();
    const bool integral = d.find_first_of(".eE") == std::string_view::npos;
    if (d.empty()) fail(fmt::format("invalid value '{}'", raw));
    if (integral) {
      std::int64_t i = 0;
      const auto [ptr, ec] = std::from_chars(first, last, i);
      if (ec == std::errc::result_out_of_range) fail(fmt::format("integer out of range '{}'", raw));
      if (ec != std::errc() || ptr != last) fail(fmt::format("invalid value '{}'", raw));
      v.data = i;
    } else {
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, x);
      if (ec != std::errc() || ptr != last) fail(fmt::format("invalid value '{}'", raw));
      v.data = x;
    }
    pos_ = end;
  }

  std::string_view text_;
  std::string_view source_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<TomlTable> parse_toml(std::string_view text, std::string_view source) {
  std::vector<TomlTable> tables(1);
  std::set<std::string> seen_sections;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](std::size_t line, const std::string& what) {
    throw ConfigError(fmt::format("{}:{}: {}", source, line, what));
  };

  while (std::getline(in, raw)) {
    ++line_no;
    int depth = 0;
    const std::string_view line = trim(strip_comment(raw, depth));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(line_no, "malformed section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (name.empty() || !std::all_of(name.begin(), name.end(), is_bare_key_char)) {
        fail(line_no, fmt::format("invalid section name '{}'", name));
      }
      if (!seen_sections.insert(std::string(name)).second) fail(line_no, fmt::format("duplicate section [{}]", name));
      tables.push_back(TomlTable{std::string(name), line_no, {}});
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty() || !std::all_of(key.begin(), key.end(), is_bare_key_char)) {
      fail(line_no, fmt::format("invalid key '{}'", key));
    }
    std::string value_text(trim(line.substr(eq + 1)));
    // strip_comment counted the brackets on the whole line; only the value can hold any.
    const std::size_t start = line_no;
    while (depth > 0) {
      if (!std::getline(in, raw)) fail(start, "unterminated array");
      ++line_no;
      value_text += '\n';
      value_text += trim(strip_comment(raw, depth));
    }
    TomlTable& table = tables.back();
    for (const TomlEntry& e : table.entries) {
      if (e.key == key) fail(start, fmt::format("duplicate key '{}'", key));
    }
    table.entries.push_back(TomlEntry{std::string(key), ValueParser(value_text, source, start).parse()});
  }
  return tables;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  void problem(std::size_t line, const std::string& what) {
    problems_.push_back(line ? fmt::format("{}:{}: {}", source_, line, what) : what);
  }

  std::vector<std::string>& problems() { return problems_; }

  template <typename T>
  void integer(const TomlEntry& e, T& out, std::int64_t min = 0) {
    const auto* i = std::get_if<std::int64_t>(&e.value.data);
    if (!i) return type_error(e, "an integer");
    if (*i < min) return problem(e.value.line, fmt::format("'{}' must be at least {}, got {}", e.key, min, *i));
    out = static_cast<T>(*i);
  }

  void number(const TomlEntry& e, double& out) {
    if (const auto* d = std::get_if<double>(&e.value.data)) out = *d;
    else if (const auto* i = std::get_if<std::int64_t>(&e.value.data)) out = static_cast<double>(*i);
    else type_error(e, "a number");
  }

  void boolean(const TomlEntry& e, bool& out) {
    const auto* b = std::get_if<bool>(&e.value.data);
    if (!b) return type_error(e, "a boolean");
    out = *b;
  }

  void string(const TomlEntry& e, std::string& out) {
    const auto* s = std::get_if<std::string>(&e.value.data);
    if (!s) return type_error(e, "a string");
    out = *s;
  }

  // Scalar or array; each item goes through `item`.
  template <typename F>
  void list(const TomlEntry& e, F&& item) {
    if (const auto* a = std::get_if<TomlArray>(&e.value.data)) {
      if (a->empty()) problem(e.value.line, fmt::format("'{}' must not be empty", e.key));
      for (const TomlValue& v : *a) item(TomlEntry{e.key, v});
    } else {
      item(e);
    }
  }

  void sizes(const TomlEntry& e, std::vector<std::size_t>& out, std::int64_t min) {
    out.clear();
    list(e, [&](const TomlEntry& item) {
      std::size_t v = 0;
      const std::size_t before = problems_.size();
      integer(item, v, min);
      if (problems_.size() == before) out.push_back(v);
    });
  }

  void heads(const TomlEntry& e, std::vector<HeadKind>& out) {
    out.clear();
    list(e, [&](const TomlEntry& item) {
      std::string name;
      const std::size_t before = problems_.size();
      string(item, name);
      if (problems_.size() != before) return;
      try {
        out.push_back(parse_head_kind(name));
      } catch (const Error&) {
        problem(item.value.line, fmt::format("unknown head '{}'", name));
      }
    });
  }

  void taus(const TomlEntry& e, std::vector<TauChoice>& out) {
    out.clear();
    list(e, [&](const TomlEntry& item) {
      if (const auto* s = std::get_if<std::string>(&item.value.data)) {
        if (*s == "learned") out.push_back(TauChoice{true, std::nullopt});
        else problem(item.value.line, fmt::format("tau must be a number or \"learned\", got \"{}\"", *s));
        return;
      }
      double v = 0.0;
      const std::size_t before = problems_.size();
      number(item, v);
      if (problems_.size() == before) out.push_back(TauChoice{false, v});
    });
  }

  void unknown(const TomlEntry& e, const std::string& table) {
    problem(e.value.line, table.empty() ? fmt::format("unknown key '{}'", e.key)
                                        : fmt::format("unknown key '{}' in [{}]", e.key, table));
  }

 private:
  void type_error(const TomlEntry& e, const char* expected) {
    problem(e.value.line, fmt::format("'{}' must be {}, got {}", e.key, expected, e.value.type_name()));
  }

  std::string source_;
  std::vector<std::string> problems_;
};

void read_root(Reader& r, const TomlEntry& e, ExperimentConfig& c) {
  const std::string& k = e.key;
  if (k == "env") {
    r.string(e, c.env);
  } else if (k == "head") {
    r.heads(e, c.heads);
  } else if (k == "K") {
    r.sizes(e, c.bins, 0);
  } else if (k == "tau") {
    r.taus(e, c.taus);
  } else if (k == "algorithm") {
    std::string name;
    r.string(e, name);
    try {
      if (!name.empty()) c.train.algorithm = parse_algorithm(name);
    } catch (const Error&) {
      r.problem(e.value.line, fmt::format("unknown algorithm '{}'", name));
    }
  } else if (k == "seeds") {
    c.seeds.clear();
    r.list(e, [&](const TomlEntry& item) {
      std::uint64_t s = 0;
      r.integer(item, s);
      c.seeds.push_back(s);
    });
  } else if (k == "master_seed") {
    r.integer(e, c.master_seed);
  } else if (k == "out") {
    std::string out;
    r.string(e, out);
    c.out = out;
  } else {
    r.unknown(e, "");
  }
}

void read_train(Reader& r, const TomlEntry& e, TrainConfig& t) {
  const std::string& k = e.key;
  if (k == "gamma") r.number(e, t.gamma);
  else if (k == "lambda") r.number(e, t.lambda);
  else if (k == "clip_ratio") r.number(e, t.clip_ratio);
  else if (k == "epochs") r.integer(e, t.epochs);
  else if (k == "minibatch_size") r.integer(e, t.minibatch_size);
  else if (k == "learning_rate") r.number(e, t.learning_rate);
  else if (k == "entropy_coef") r.number(e, t.entropy_coef);
  else if (k == "value_coef") r.number(e, t.value_coef);
  else if (k == "max_grad_norm") r.number(e, t.max_grad_norm);
  else if (k == "normalize_advantages") r.boolean(e, t.normalize_advantages);
  else if (k == "reward_scale") r.number(e, t.reward_scale);
  else if (k == "steps_per_batch") r.integer(e, t.steps_per_batch);
  else if (k == "total_steps") r.integer(e, t.total_steps);
  else r.unknown(e, "train");
}

void read_eval(Reader& r, const TomlEntry& e, EvalConfig& v) {
  const std::string& k = e.key;
  if (k == "interval") r.integer(e, v.interval);
  else if (k == "episodes") r.integer(e, v.episodes);
  else if (k == "seed") r.integer(e, v.seed);
  else if (k == "stochastic") r.boolean(e, v.stochastic);
  else r.unknown(e, "eval");
}

void read_network(Reader& r, const TomlEntry& e, ExperimentConfig& c) {
  const std::string& k = e.key;
  if (k == "policy_hidden") r.sizes(e, c.policy_hidden, 1);
  else if (k == "value_hidden") r.sizes(e, c.value_hidden, 1);
  else if (k == "initial_log_std") r.number(e, c.initial_log_std);
  else if (k == "tau_min") r.number(e, c.tau_min);
  else if (k == "tau_max") r.number(e, c.tau_max);
  else r.unknown(e, "network");
}

void read_variance(Reader& r, const TomlEntry& e, VarianceConfig& v) {
  const std::string& k = e.key;
  if (k == "heads") {
    r.heads(e, v.heads);
  } else if (k == "K") {
    r.sizes(e, v.bins, 0);
  } else if (k == "tau") {
    r.number(e, v.temperature);
  } else if (k == "inits") {
    r.integer(e, v.inits);
  } else if (k == "samples") {
    r.integer(e, v.samples);
  } else if (k == "reward") {
    r.number(e, v.reward);
  } else if (k == "hidden") {
    v.hidden.clear();
    // An empty list is allowed here: a linear policy.
    if (const auto* a = std::get_if<TomlArray>(&e.value.data); a && a->empty()) return;
    r.sizes(e, v.hidden, 1);
  } else {
    r.unknown(e, "variance");
  }
}

template <typename T>
void check_distinct(const std::vector<T>& items, const std::string& what, std::vector<std::string>& problems) {
  std::vector<T> sorted(items);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) problems.push_back(what + " must be distinct");
}

void append_problems(const Error& e, std::vector<std::string>& problems) {
  std::istringstream lines(e.what());
  std::string line;
  std::getline(lines, line);  // header
  bool any = false;
  while (std::getline(lines, line)) {
    problems.emplace_back(trim(line));
    any = true;
  }
  if (!any) problems.emplace_back(e.what());
}

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid experiment config:";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

}  // namespace

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  try {
    make_env(env);
  } catch (const Error&) {
    problems.push_back(fmt::format("unknown env '{}'", env));
  }
  if (heads.empty()) problems.emplace_back("at least one head is required");
  check_distinct(heads, "heads", problems);
  if (bins.empty()) problems.emplace_back("at least one K is required");
  for (std::size_t k : bins) {
    if (k < 1) problems.push_back(fmt::format("K must be at least 1, got {}", k));
  }
  check_distinct(bins, "K values", problems);
  if (taus.empty()) problems.emplace_back("at least one tau is required");
  std::vector<double> fixed;
  std::size_t learned = 0;
  for (const TauChoice& t : taus) {
    if (t.learned) {
      ++learned;
    } else if (t.value) {
      if (!(*t.value > 0.0) || !std::isfinite(*t.value)) problems.push_back(fmt::format("tau must be positive, got {}", *t.value));
      fixed.push_back(*t.value);
    }
  }
  if (learned > 1) problems.emplace_back("tau \"learned\" listed more than once");
  check_distinct(fixed, "tau values", problems);
  if (seeds.empty()) problems.emplace_back("seeds must not be empty");
  check_distinct(seeds, "seeds", problems);
  if (eval.interval < 1) problems.emplace_back("eval interval must be at least 1");
  if (eval.episodes < 1) problems.emplace_back("eval episodes must be at least 1");
  if (policy_hidden.empty() || value_hidden.empty()) problems.emplace_back("hidden layer lists must not be empty");
  if (!(tau_min > 0.0) || tau_min > tau_max) problems.emplace_back("tau range must satisfy 0 < tau_min <= tau_max");
  if (out.empty()) problems.emplace_back("out must not be empty");
  try {
    train.validate();
  } catch (const Error& e) {
    append_problems(e, problems);
  }
  try {
    variance.validate();
  } catch (const Error& e) {
    append_problems(e, problems);
  }
  if (!problems.empty()) throw ConfigError(join_problems(problems));
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  const std::vector<TomlTable> tables = parse_toml(text, source);
  ExperimentConfig c;
  Reader r{std::string(source)};
  for (const TomlTable& t : tables) {
    for (const TomlEntry& e : t.entries) {
      if (t.name.empty()) read_root(r, e, c);
      else if (t.name == "train") read_train(r, e, c.train);
      else if (t.name == "eval") read_eval(r, e, c.eval);
      else if (t.name == "network") read_network(r, e, c);
      else if (t.name == "variance") read_variance(r, e, c.variance);
    }
    if (!t.name.empty() && t.name != "train" && t.name != "eval" && t.name != "network" && t.name != "variance") {
      r.problem(t.line, fmt::format("unknown section [{}]", t.name));
    }
  }
  c.variance.master_seed = c.master_seed;
  std::vector<std::string>& problems = r.problems();
  if (problems.empty()) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      append_problems(e, problems);
    }
  }
  if (!problems.empty()) throw ConfigError(join_problems(problems));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::vector<Variant> expand_variants(const ExperimentConfig& config) {
  std::vector<Variant> out;
  for (HeadKind kind : config.heads) {
    HeadConfig head;
    head.kind = kind;
    head.temperature_min = config.tau_min;
    head.temperature_max = config.tau_max;
    if (!is_discrete(kind)) {
      head.temperature = 1.0;
      out.push_back(Variant{std::string(to_string(kind)), head});
      continue;
    }
    for (std::size_t k : config.bins) {
      for (const TauChoice& tau : config.taus) {
        Variant v{{}, head};
        v.head.bins = k;
        v.head.learned_temperature = tau.learned;
        v.head.temperature = tau.value.value_or(HeadConfig::default_temperature(kind));
        if (tau.learned) {
          v.head.temperature = std::clamp(v.head.temperature, config.tau_min, config.tau_max);
          v.name = fmt::format("{}-K{}-taulearned", to_string(kind), k);
        } else {
          v.name = fmt::format("{}-K{}-tau{}", to_string(kind), k, v.head.temperature);
        }
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

std::uint64_t cell_seed(std::uint64_t master_seed, std::uint64_t seed) { return mix_seed(master_seed, seed); }

RunSpec make_run_spec(const ExperimentConfig& config, const Variant& variant, std::uint64_t seed) {
  RunSpec spec;
  spec.env = config.env;
  spec.network.head = variant.head;
  spec.network.policy_hidden = config.policy_hidden;
  spec.network.value_hidden = config.value_hidden;
  spec.network.initial_log_std = config.initial_log_std;
  spec.train = config.train;
  spec.eval = config.eval;
  spec.seed = cell_seed(config.master_seed, seed);
  return spec;
}

}  // namespace upg
