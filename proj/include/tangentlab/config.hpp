#pragma once

// Experiment configuration: an INI-style text file with [section] headers
// and `key = value` lines. Sections: [benchmark], [network], [train],
// [diagnostics], [output], [run]. `#` and `;` start comments. Parsing
// collects every offending field before failing, and a fully resolved JSON
// echo of the effective configuration is written next to run outputs.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tangentlab/mlp.hpp"
#include "tangentlab/trainer.hpp"

namespace tangentlab {

enum class BenchmarkKind { permuted, rotated, split, csv };

struct BenchmarkConfig {
  BenchmarkKind kind = BenchmarkKind::permuted;
  std::string csv_path;            // kind == csv only
  int num_tasks = 1;
  int n = 200;                     // samples per generated task
  int d = 16;                      // input dimension
  int classes = 2;
  std::uint64_t dataset_seed = 1;
  double angle_step = 5.0;         // kind == rotated: degrees added per task
  int classes_per_task = 0;        // kind == split: 0 = classes / num_tasks
};

struct NetworkConfig {
  std::vector<int> hidden = {100};
  Activation activation = Activation::relu;
  bool bias = true;
};

struct DiagnosticsConfig {
  double delta = 0.05;     // failure-probability budget of the bound
  double lipschitz_c = 1.0;
};

struct ExperimentConfig {
  BenchmarkConfig benchmark;
  NetworkConfig network;
  TrainConfig train;  // per-run seed is injected per seed; cfg.seed is unused
  DiagnosticsConfig diagnostics;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds = {1};

  /** Network over the actual task stream (csv files fix their own shape). */
  Mlp make_network(int input_dim, int output_classes) const {
    std::vector<int> sizes;
    sizes.push_back(input_dim);
    sizes.insert(sizes.end(), network.hidden.begin(), network.hidden.end());
    sizes.push_back(output_classes);
    return Mlp{sizes, network.activation, network.bias};
  }

  int split_group_size() const {
    if (benchmark.classes_per_task > 0) return benchmark.classes_per_task;
    return benchmark.num_tasks > 0 ? benchmark.classes / benchmark.num_tasks : 0;
  }

  /** Collects every invalid field; throws one ConfigError naming them all. */
  void validate() const {
    std::vector<std::string> bad;
    auto flag = [&](const std::string& field, const std::string& why) {
      bad.push_back(field + ": " + why);
    };

    if (benchmark.num_tasks < 1) flag("benchmark.num_tasks", "must be >= 1");
    if (benchmark.classes < 2) flag("benchmark.classes", "need at least 2 classes");
    if (benchmark.kind != BenchmarkKind::csv) {
      if (benchmark.n < benchmark.classes) flag("benchmark.n", "need n >= classes");
      if (benchmark.d < benchmark.classes) flag("benchmark.d", "need d >= classes");
    }
    if (benchmark.kind == BenchmarkKind::rotated && benchmark.d < 2) {
      flag("benchmark.d", "rotation needs input dimension >= 2");
    }
    if (benchmark.kind == BenchmarkKind::csv) {
      if (benchmark.csv_path.empty()) flag("benchmark.csv_path", "required for the csv benchmark");
      if (benchmark.num_tasks != 1) {
        flag("benchmark.num_tasks", "the csv benchmark provides exactly one task");
      }
    }
    if (benchmark.kind == BenchmarkKind::split) {
      const int group = split_group_size();
      if (group < 2) {
        flag("benchmark.classes_per_task", "each split task needs at least 2 classes");
      } else if (group * benchmark.num_tasks > benchmark.classes) {
        flag("benchmark.classes", "not enough classes for " +
                                      std::to_string(benchmark.num_tasks) + " disjoint tasks of " +
                                      std::to_string(group));
      }
    }

    if (network.hidden.empty()) flag("network.hidden", "need at least one hidden layer");
    for (int h : network.hidden) {
      if (h < 1) {
        flag("network.hidden", "layer sizes must be positive");
        break;
      }
    }

    for (const auto& [field, why] : train.issues()) flag("train." + field, why);

    if (!(diagnostics.delta > 0.0 && diagnostics.delta < 1.0)) {
      flag("diagnostics.delta", "must lie strictly between 0 and 1");
    }
    if (!(diagnostics.lipschitz_c > 0.0)) flag("diagnostics.lipschitz_c", "must be positive");

    if (output_dir.empty()) flag("output.dir", "must not be empty");
    if (seeds.empty()) flag("run.seeds", "need at least one seed");

    if (!bad.empty()) {
      std::string msg = "invalid configuration (" + std::to_string(bad.size()) + " field" +
                        (bad.size() == 1 ? "" : "s") + "):";
      for (const std::string& b : bad) msg += "\n  - " + b;
      throw ConfigError(msg);
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
  return parts;
}

/** One parse error, tagged with the config line it came from. */
struct FieldIssue {
  int line;
  std::string field;
  std::string message;
};

struct ConfigParser {
  std::vector<FieldIssue> issues;
  int line_no = 0;

  void issue(const std::string& field, const std::string& message) {
    issues.push_back({line_no, field, message});
  }

  bool parse_int(const std::string& field, const std::string& v, int& out) {
    try {
      std::size_t used = 0;
      const long long parsed = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      out = static_cast<int>(parsed);
      return true;
    } catch (...) {
      issue(field, "expected an integer, got '" + v + "'");
      return false;
    }
  }

  bool parse_long(const std::string& field, const std::string& v, long& out) {
    try {
      std::size_t used = 0;
      const long long parsed = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      out = static_cast<long>(parsed);
      return true;
    } catch (...) {
      issue(field, "expected an integer, got '" + v + "'");
      return false;
    }
  }

  bool parse_u64(const std::string& field, const std::string& v, std::uint64_t& out) {
    try {
      std::size_t used = 0;
      const unsigned long long parsed = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      out = static_cast<std::uint64_t>(parsed);
      return true;
    } catch (...) {
      issue(field, "expected a nonnegative integer, got '" + v + "'");
      return false;
    }
  }

  bool parse_double(const std::string& field, const std::string& v, double& out) {
    try {
      std::size_t used = 0;
      const double parsed = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      out = parsed;
      return true;
    } catch (...) {
      issue(field, "expected a number, got '" + v + "'");
      return false;
    }
  }

  bool parse_bool(const std::string& field, const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes") {
      out = true;
      return true;
    }
    if (v == "false" || v == "0" || v == "no") {
      out = false;
      return true;
    }
    issue(field, "expected true or false, got '" + v + "'");
    return false;
  }
};

}  // namespace detail

/** Parses configuration text; collects all field errors before throwing. */
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  detail::ConfigParser p;
  std::string section;
  std::istringstream in(text);
  std::string raw;

  while (std::getline(in, raw)) {
    ++p.line_no;
    std::string line = raw;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        p.issue(line, "unterminated section header");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "benchmark" && section != "network" && section != "train" &&
          section != "diagnostics" && section != "output" && section != "run") {
        p.issue("[" + section + "]", "unknown section");
        section.clear();
      }
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      p.issue(line, "expected 'key = value'");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string field = section.empty() ? key : section + "." + key;
    if (section.empty()) {
      p.issue(field, "key outside any [section]");
      continue;
    }

    if (section == "benchmark") {
      if (key == "kind") {
        if (value == "permuted") cfg.benchmark.kind = BenchmarkKind::permuted;
        else if (value == "rotated") cfg.benchmark.kind = BenchmarkKind::rotated;
        else if (value == "split") cfg.benchmark.kind = BenchmarkKind::split;
        else if (value == "csv") cfg.benchmark.kind = BenchmarkKind::csv;
        else p.issue(field, "expected permuted, rotated, split, or csv");
      } else if (key == "csv_path") cfg.benchmark.csv_path = value;
      else if (key == "num_tasks") p.parse_int(field, value, cfg.benchmark.num_tasks);
      else if (key == "n") p.parse_int(field, value, cfg.benchmark.n);
      else if (key == "d") p.parse_int(field, value, cfg.benchmark.d);
      else if (key == "classes") p.parse_int(field, value, cfg.benchmark.classes);
      else if (key == "dataset_seed") p.parse_u64(field, value, cfg.benchmark.dataset_seed);
      else if (key == "angle_step") p.parse_double(field, value, cfg.benchmark.angle_step);
      else if (key == "classes_per_task")
        p.parse_int(field, value, cfg.benchmark.classes_per_task);
      else p.issue(field, "unknown key");
    } else if (section == "network") {
      if (key == "hidden") {
        std::vector<int> sizes;
        bool ok = !value.empty();
        for (const std::string& part : detail::split_list(value)) {
          int h = 0;
          ok = ok && p.parse_int(field, part, h);
          if (ok) sizes.push_back(h);
        }
        if (ok && !sizes.empty()) cfg.network.hidden = sizes;
        else if (value.empty()) p.issue(field, "expected a comma-separated size list");
      } else if (key == "activation") {
        if (value == "relu") cfg.network.activation = Activation::relu;
        else if (value == "identity") cfg.network.activation = Activation::identity;
        else p.issue(field, "expected relu or identity");
      } else if (key == "bias") p.parse_bool(field, value, cfg.network.bias);
      else p.issue(field, "unknown key");
    } else if (section == "train") {
      if (key == "algorithm") {
        if (value == "sgd") cfg.train.algorithm = Algorithm::sgd;
        else if (value == "ogd") cfg.train.algorithm = Algorithm::ogd;
        else if (value == "ogd_plus") cfg.train.algorithm = Algorithm::ogd_plus;
        else p.issue(field, "expected sgd, ogd, or ogd_plus");
      } else if (key == "regime") {
        if (value == "linearized") cfg.train.regime = Regime::linearized;
        else if (value == "nonlinear") cfg.train.regime = Regime::nonlinear;
        else p.issue(field, "expected linearized or nonlinear");
      } else if (key == "learning_rate") {
        if (value == "auto") cfg.train.learning_rate_auto = true;
        else {
          cfg.train.learning_rate_auto = false;
          p.parse_double(field, value, cfg.train.learning_rate);
        }
      } else if (key == "auto_lr_factor")
        p.parse_double(field, value, cfg.train.auto_lr_factor);
      else if (key == "ridge") p.parse_double(field, value, cfg.train.ridge);
      else if (key == "steps_per_task") p.parse_long(field, value, cfg.train.steps_per_task);
      else if (key == "convergence_tolerance")
        p.parse_double(field, value, cfg.train.convergence_tolerance);
      else if (key == "batch_size") p.parse_int(field, value, cfg.train.batch_size);
      else if (key == "memory_cap") {
        if (value == "full") cfg.train.memory_cap_per_task = kFullMemory;
        else p.parse_int(field, value, cfg.train.memory_cap_per_task);
      } else if (key == "enforce_stable_lr")
        p.parse_bool(field, value, cfg.train.enforce_stable_lr);
      else p.issue(field, "unknown key");
    } else if (section == "diagnostics") {
      if (key == "delta") p.parse_double(field, value, cfg.diagnostics.delta);
      else if (key == "lipschitz_c") p.parse_double(field, value, cfg.diagnostics.lipschitz_c);
      else p.issue(field, "unknown key");
    } else if (section == "output") {
      if (key == "dir") cfg.output_dir = value;
      else p.issue(field, "unknown key");
    } else if (section == "run") {
      if (key == "seeds") {
        std::vector<std::uint64_t> seeds;
        bool ok = !value.empty();
        for (const std::string& part : detail::split_list(value)) {
          std::uint64_t s = 0;
          ok = ok && p.parse_u64(field, part, s);
          if (ok) seeds.push_back(s);
        }
        if (ok && !seeds.empty()) cfg.seeds = seeds;
        else if (value.empty()) p.issue(field, "expected a comma-separated seed list");
      } else p.issue(field, "unknown key");
    }
  }

  if (!p.issues.empty()) {
    std::string msg = "config parse failed (" + std::to_string(p.issues.size()) + " issue" +
                      (p.issues.size() == 1 ? "" : "s") + "):";
    for (const detail::FieldIssue& f : p.issues) {
      msg += "\n  - line " + std::to_string(f.line) + ", " + f.field + ": " + f.message;
    }
    throw ConfigError(msg);
  }
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/** The fully resolved configuration (defaults applied) as a JSON object. */
inline nlohmann::json resolved_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  const char* kind = cfg.benchmark.kind == BenchmarkKind::permuted  ? "permuted"
                     : cfg.benchmark.kind == BenchmarkKind::rotated ? "rotated"
                     : cfg.benchmark.kind == BenchmarkKind::split   ? "split"
                                                                    : "csv";
  j["benchmark"] = {{"kind", kind},
                    {"num_tasks", cfg.benchmark.num_tasks},
                    {"n", cfg.benchmark.n},
                    {"d", cfg.benchmark.d},
                    {"classes", cfg.benchmark.classes},
                    {"dataset_seed", cfg.benchmark.dataset_seed}};
  if (cfg.benchmark.kind == BenchmarkKind::csv) j["benchmark"]["csv_path"] = cfg.benchmark.csv_path;
  if (cfg.benchmark.kind == BenchmarkKind::rotated) {
    j["benchmark"]["angle_step"] = cfg.benchmark.angle_step;
  }
  if (cfg.benchmark.kind == BenchmarkKind::split) {
    j["benchmark"]["classes_per_task"] = cfg.split_group_size();
  }
  j["network"] = {{"hidden", cfg.network.hidden},
                  {"activation", cfg.network.activation == Activation::relu ? "relu" : "identity"},
                  {"bias", cfg.network.bias}};
  j["train"] = {{"algorithm", cfg.train.algorithm == Algorithm::sgd   ? "sgd"
                              : cfg.train.algorithm == Algorithm::ogd ? "ogd"
                                                                      : "ogd_plus"},
                {"regime", cfg.train.regime == Regime::linearized ? "linearized" : "nonlinear"},
                {"learning_rate", cfg.train.learning_rate_auto
                                      ? nlohmann::json("auto")
                                      : nlohmann::json(cfg.train.learning_rate)},
                {"auto_lr_factor", cfg.train.auto_lr_factor},
                {"ridge", cfg.train.ridge},
                {"steps_per_task", cfg.train.steps_per_task},
                {"convergence_tolerance", cfg.train.convergence_tolerance},
                {"batch_size", cfg.train.batch_size},
                {"memory_cap", cfg.train.memory_cap_per_task == kFullMemory
                                   ? nlohmann::json("full")
                                   : nlohmann::json(cfg.train.memory_cap_per_task)},
                {"enforce_stable_lr", cfg.train.enforce_stable_lr}};
  j["diagnostics"] = {{"delta", cfg.diagnostics.delta},
                      {"lipschitz_c", cfg.diagnostics.lipschitz_c}};
  j["output"] = {{"dir", cfg.output_dir}};
  j["run"] = {{"seeds", cfg.seeds}};
  return j;
}

}  // namespace tangentlab
