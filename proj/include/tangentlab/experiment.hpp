#pragma once

// Experiment execution and artifact layer behind the run/sweep/bounds/report
// subcommands. Every emitted file is a pure function of (config, seeds, code
// version): wall-clock timings go to stdout only, JSON objects serialize with
// sorted keys, and all floats use shortest round-trip formatting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tangentlab/config.hpp"
#include "tangentlab/diagnostics.hpp"
#include "tangentlab/format.hpp"

namespace tangentlab {

/** The task stream a configuration describes (task ids 1..T). */
inline std::vector<TaskDataset> build_tasks(const ExperimentConfig& cfg) {
  const BenchmarkConfig& b = cfg.benchmark;
  std::vector<TaskDataset> tasks;
  if (b.kind == BenchmarkKind::csv) {
    TaskDataset task = load_csv(b.csv_path);
    task.task_id = 1;
    tasks.push_back(std::move(task));
    return tasks;
  }
  const TaskDataset base = generate_base(b.dataset_seed, b.n, b.d, b.classes);
  for (int t = 0; t < b.num_tasks; ++t) {
    TaskDataset task;
    switch (b.kind) {
      case BenchmarkKind::permuted:
        // permutation seed t: the first task is the unpermuted base
        task = permute_task(base, static_cast<std::uint64_t>(t));
        break;
      case BenchmarkKind::rotated:
        task = rotate_task(base, b.angle_step * t);
        break;
      case BenchmarkKind::split: {
        const int group = cfg.split_group_size();
        std::vector<int> subset;
        for (int k = 0; k < group; ++k) subset.push_back(t * group + k);
        task = split_task(base, subset);
        break;
      }
      case BenchmarkKind::csv:
        break;  // handled above
    }
    task.task_id = t + 1;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

/**
 * Closed-form kernel statistics of a solved stream: everything the
 * generalisation bounds need, independent of the probability budget. For a
 * linearized run these describe the trained model exactly (the trainer
 * converges to the recursive kernel solution); they are small (O(T^2)
 * numbers), so records stay compact and reloadable.
 */
struct KernelStatistics {
  double ridge = 0.0;
  std::vector<int> task_ids;
  std::vector<int> train_counts;
  std::vector<double> gram_traces;
  std::vector<double> dissimilarities;            // S-bar per task
  std::vector<std::vector<double>> interference;  // [k-1][tau-1] = H_{k,tau}, tau < k

  int task_count() const { return static_cast<int>(task_ids.size()); }
};

inline KernelStatistics kernel_statistics(const ContinualSolution& sol, double ridge) {
  KernelStatistics ks;
  ks.ridge = ridge;
  const int T = sol.task_count();
  for (int t = 0; t < T; ++t) {
    const TaskSolution& ts = sol.tasks[t];
    ks.task_ids.push_back(ts.task_id);
    ks.train_counts.push_back(ts.n());
    ks.gram_traces.push_back(ts.gram.trace());
    ks.dissimilarities.push_back(ntk_dissimilarity(ts));
    std::vector<double> row;
    for (int tau = 1; tau < t + 1; ++tau) row.push_back(forgetting_term(sol, t + 1, tau));
    ks.interference.push_back(std::move(row));
  }
  return ks;
}

/** Assembles the three bound cases from stored statistics plus (delta, c). */
inline nlohmann::json bounds_json_from_statistics(const KernelStatistics& ks, double delta,
                                                  double lipschitz_c) {
  const int T = ks.task_count();
  if (T == 0) throw DimensionError("bounds: no solved tasks in the statistics");
  const int n_last = ks.train_counts.back();
  const double conf = confidence_term(delta, lipschitz_c, n_last);
  double rademacher = 0.0;
  for (int t = 0; t < T; ++t) {
    rademacher += std::sqrt(ks.gram_traces[t] * ks.dissimilarities[t] /
                            (static_cast<double>(ks.train_counts[t]) * ks.train_counts[t]));
  }

  nlohmann::json per_alg;
  for (const char* alg : {"sgd", "ogd"}) {
    nlohmann::json entries = nlohmann::json::array();
    for (int tau = 1; tau <= T; ++tau) {
      const double empirical = ks.ridge * ks.ridge * ks.dissimilarities[tau - 1] /
                               ks.train_counts[tau - 1];
      nlohmann::json entry;
      entry["task_id"] = ks.task_ids[tau - 1];
      entry["empirical_loss_term"] = empirical;
      double forgetting_scaled = 0.0;
      nlohmann::json terms = nlohmann::json::array();
      if (std::string(alg) == "sgd" && tau < T) {
        for (int k = tau + 1; k <= T; ++k) {
          const double h = ks.interference[k - 1][tau - 1];
          terms.push_back(h);
          forgetting_scaled += h / n_last;
        }
      }
      entry["forgetting_terms"] = terms;
      entry["forgetting_sum_scaled"] = forgetting_scaled;
      entry["total_bound"] = empirical + forgetting_scaled + rademacher + conf;
      entries.push_back(std::move(entry));
    }
    per_alg[alg] = std::move(entries);
  }

  nlohmann::json j;
  j["schema"] = "bounds-v1";
  j["delta"] = delta;
  j["lipschitz_c"] = lipschitz_c;
  j["ridge"] = ks.ridge;
  j["n_last"] = n_last;
  j["confidence_term"] = conf;
  j["rademacher_total"] = rademacher;
  j["per_algorithm"] = std::move(per_alg);
  return j;
}

/** One seed's complete, reloadable result. */
struct RunRecord {
  std::uint64_t seed = 0;
  nlohmann::json config;  // resolved configuration echo
  int param_count = 0;
  Eigen::MatrixXd accuracy_matrix;     // (T+1) x T
  Eigen::MatrixXd memorized_accuracy;  // (T+1) x T
  MetricsReport metrics_report;
  std::vector<double> forgetting_probes;  // per task, index tau-1
  bool linearized = false;
  KernelStatistics statistics;  // anchor-kernel table (bound table if linearized)
};

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      // JSON has no NaN literal; not-yet-defined cells serialize as null
      m(i, j) = rows[i][j].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                     : rows[i][j].get<double>();
    }
  }
  return m;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v.has_value() ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j;
  j["schema"] = "run-record-v1";
  j["seed"] = r.seed;
  j["config"] = r.config;
  j["param_count"] = r.param_count;
  j["accuracy_matrix"] = detail::matrix_json(r.accuracy_matrix);
  j["memorized_accuracy"] = detail::matrix_json(r.memorized_accuracy);
  j["metrics"] = {{"acc", r.metrics_report.acc},
                  {"bwt", detail::optional_json(r.metrics_report.bwt)},
                  {"fwt", detail::optional_json(r.metrics_report.fwt)},
                  {"afm", detail::optional_json(r.metrics_report.afm)}};
  j["forgetting_probes"] = r.forgetting_probes;
  j["linearized"] = r.linearized;
  j["statistics"] = {{"ridge", r.statistics.ridge},
                     {"task_ids", r.statistics.task_ids},
                     {"train_counts", r.statistics.train_counts},
                     {"gram_traces", r.statistics.gram_traces},
                     {"dissimilarities", r.statistics.dissimilarities},
                     {"interference", r.statistics.interference}};
  return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  if (!j.contains("schema") || j["schema"] != "run-record-v1") {
    throw ConfigError("run record: unrecognized schema");
  }
  RunRecord r;
  r.seed = j["seed"].get<std::uint64_t>();
  r.config = j["config"];
  r.param_count = j["param_count"].get<int>();
  r.accuracy_matrix = detail::matrix_from_json(j["accuracy_matrix"]);
  r.memorized_accuracy = detail::matrix_from_json(j["memorized_accuracy"]);
  r.metrics_report.acc = j["metrics"]["acc"].get<double>();
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  r.metrics_report.bwt = opt(j["metrics"]["bwt"]);
  r.metrics_report.fwt = opt(j["metrics"]["fwt"]);
  r.metrics_report.afm = opt(j["metrics"]["afm"]);
  r.forgetting_probes = j["forgetting_probes"].get<std::vector<double>>();
  r.linearized = j["linearized"].get<bool>();
  r.statistics.ridge = j["statistics"]["ridge"].get<double>();
  r.statistics.task_ids = j["statistics"]["task_ids"].get<std::vector<int>>();
  r.statistics.train_counts = j["statistics"]["train_counts"].get<std::vector<int>>();
  r.statistics.gram_traces = j["statistics"]["gram_traces"].get<std::vector<double>>();
  r.statistics.dissimilarities = j["statistics"]["dissimilarities"].get<std::vector<double>>();
  r.statistics.interference =
      j["statistics"]["interference"].get<std::vector<std::vector<double>>>();
  return r;
}

/** Trains one seed and gathers metrics, probes, and kernel statistics. */
inline RunRecord run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::vector<TaskDataset> tasks = build_tasks(cfg);
  const Mlp net = cfg.make_network(tasks.front().dim(), tasks.front().classes());
  TrainConfig train = cfg.train;
  train.seed = seed;
  const ContinualRunResult result = run_continual(net, tasks, train);

  RunRecord record;
  record.seed = seed;
  record.config = resolved_json(cfg);
  record.param_count = net.param_count();
  record.accuracy_matrix = result.accuracy_matrix;
  record.memorized_accuracy = result.memorized_accuracy;
  record.metrics_report = metrics(result);
  for (int t = 1; t <= result.task_count(); ++t) {
    record.forgetting_probes.push_back(forgetting_probe(result, t));
  }
  record.linearized = cfg.train.regime == Regime::linearized;

  // anchor-kernel table: exact description of the linearized run, and a
  // stream-similarity diagnostic for nonlinear runs
  LinearizedModel lin = linearize(net, result.initial_weights, tasks.front());
  ContinualSolution sol = solve_stream(lin, tasks, cfg.train.ridge, cfg.train.projects(),
                                       cfg.train.memory_cap_per_task);
  record.statistics = kernel_statistics(sol, cfg.train.ridge);
  return record;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> values;
};

/** Mean and population standard deviation. */
inline MeanStd aggregate(std::vector<double> values) {
  MeanStd a;
  a.values = std::move(values);
  if (a.values.empty()) return a;
  for (double v : a.values) a.mean += v;
  a.mean /= static_cast<double>(a.values.size());
  for (double v : a.values) a.std += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(a.std / static_cast<double>(a.values.size()));
  return a;
}

namespace detail {

inline nlohmann::json mean_std_json(const MeanStd& a) {
  return {{"mean", a.mean}, {"std", a.std}, {"values", a.values}};
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

inline std::string csv_cell(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : std::string();
}

/** Refuses to reuse a nonempty directory unless forced; creates it if needed. */
inline void prepare_output_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw ConfigError("output path '" + dir.string() + "' exists and is not a directory");
    }
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory '" + dir.string() +
                        "' is not empty; pass --force to overwrite");
    }
  } else {
    fs::create_directories(dir);
  }
}

}  // namespace detail

/** Everything cmd_run produced, if callers want to inspect it in-process. */
struct RunOutput {
  std::vector<RunRecord> records;
  nlohmann::json summary;
};

/**
 * Executes the configured run for every seed and writes the artifact set:
 * metrics.csv, accuracy_matrix_<seed>.csv, run_record_<seed>.json,
 * bounds.json, config_resolved.json, summary.json.
 */
inline RunOutput cmd_run(const ExperimentConfig& cfg, bool force) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path out_dir(cfg.output_dir);
  detail::prepare_output_dir(out_dir, force);

  RunOutput out;
  for (std::uint64_t seed : cfg.seeds) out.records.push_back(run_one_seed(cfg, seed));

  // metrics.csv: one row per seed; absent metrics stay empty
  {
    std::string csv = "seed,acc,bwt,fwt,afm\n";
    for (const RunRecord& r : out.records) {
      csv += std::to_string(r.seed) + "," + format_double(r.metrics_report.acc) + "," +
             detail::csv_cell(r.metrics_report.bwt) + "," +
             detail::csv_cell(r.metrics_report.fwt) + "," +
             detail::csv_cell(r.metrics_report.afm) + "\n";
    }
    detail::write_file(out_dir / "metrics.csv", csv);
  }

  // accuracy_matrix_<seed>.csv: baseline row then one row per trained task
  for (const RunRecord& r : out.records) {
    const int T = static_cast<int>(r.accuracy_matrix.cols());
    std::string csv = "phase";
    for (int t = 1; t <= T; ++t) csv += ",task_" + std::to_string(t);
    csv += "\n";
    for (int row = 0; row <= T; ++row) {
      csv += row == 0 ? "baseline" : "after_task_" + std::to_string(row);
      for (int t = 0; t < T; ++t) csv += "," + format_double(r.accuracy_matrix(row, t));
      csv += "\n";
    }
    detail::write_file(out_dir / ("accuracy_matrix_" + std::to_string(r.seed) + ".csv"), csv);
  }

  // run_record_<seed>.json
  for (const RunRecord& r : out.records) {
    detail::write_file(out_dir / ("run_record_" + std::to_string(r.seed) + ".json"),
                       to_json(r).dump(2) + "\n");
  }

  // bounds.json: closed-form decompositions per seed (linearized runs only)
  {
    nlohmann::json j;
    j["schema"] = "bounds-per-seed-v1";
    if (cfg.train.regime == Regime::linearized) {
      j["regime"] = "linearized";
      nlohmann::json per_seed = nlohmann::json::array();
      for (const RunRecord& r : out.records) {
        nlohmann::json entry = bounds_json_from_statistics(r.statistics, cfg.diagnostics.delta,
                                                           cfg.diagnostics.lipschitz_c);
        entry["seed"] = r.seed;
        per_seed.push_back(std::move(entry));
      }
      j["per_seed"] = std::move(per_seed);
    } else {
      j["regime"] = "nonlinear";
      j["note"] = "generalisation bounds describe the linearized regime only; "
                  "this run trained the nonlinear network, so no bound is reported";
    }
    detail::write_file(out_dir / "bounds.json", j.dump(2) + "\n");
  }

  detail::write_file(out_dir / "config_resolved.json", resolved_json(cfg).dump(2) + "\n");

  // summary.json: mean and standard deviation across seeds
  {
    std::vector<double> accs, probes;
    std::vector<double> bwts, fwts, afms;
    bool have_rest = true;
    for (const RunRecord& r : out.records) {
      accs.push_back(r.metrics_report.acc);
      probes.push_back(r.forgetting_probes.front());
      have_rest = have_rest && r.metrics_report.bwt.has_value();
      if (r.metrics_report.bwt) bwts.push_back(*r.metrics_report.bwt);
      if (r.metrics_report.fwt) fwts.push_back(*r.metrics_report.fwt);
      if (r.metrics_report.afm) afms.push_back(*r.metrics_report.afm);
    }
    nlohmann::json j;
    j["schema"] = "summary-v1";
    j["seed_count"] = out.records.size();
    j["seeds"] = cfg.seeds;
    j["acc"] = detail::mean_std_json(aggregate(accs));
    j["bwt"] = have_rest ? detail::mean_std_json(aggregate(bwts)) : nlohmann::json(nullptr);
    j["fwt"] = have_rest ? detail::mean_std_json(aggregate(fwts)) : nlohmann::json(nullptr);
    j["afm"] = have_rest ? detail::mean_std_json(aggregate(afms)) : nlohmann::json(nullptr);
    j["forgetting_probe_task1"] = detail::mean_std_json(aggregate(probes));
    j["config"] = resolved_json(cfg);
    out.summary = j;
    detail::write_file(out_dir / "summary.json", j.dump(2) + "\n");
  }
  return out;
}

enum class SweepAxis { hidden_size, memory_cap, angle };

inline SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "hidden_size") return SweepAxis::hidden_size;
  if (name == "memory_cap") return SweepAxis::memory_cap;
  if (name == "angle") return SweepAxis::angle;
  throw ConfigError("sweep: unknown axis '" + name +
                    "' (expected hidden_size, memory_cap, or angle)");
}

/** The configuration one sweep point runs: the axis value substituted in. */
inline ExperimentConfig sweep_point_config(const ExperimentConfig& base, SweepAxis axis,
                                           const std::string& value,
                                           const std::string& point_dir) {
  ExperimentConfig cfg = base;
  cfg.output_dir = point_dir;
  switch (axis) {
    case SweepAxis::hidden_size: {
      int h = 0;
      try {
        std::size_t used = 0;
        h = std::stoi(value, &used);
        if (used != value.size() || h < 1) throw std::invalid_argument(value);
      } catch (...) {
        throw ConfigError("sweep: hidden_size value '" + value + "' is not a positive integer");
      }
      cfg.network.hidden = {h};
      break;
    }
    case SweepAxis::memory_cap: {
      if (value == "full") {
        cfg.train.memory_cap_per_task = kFullMemory;
      } else {
        int cap = 0;
        try {
          std::size_t used = 0;
          cap = std::stoi(value, &used);
          if (used != value.size() || cap < 1) throw std::invalid_argument(value);
        } catch (...) {
          throw ConfigError("sweep: memory_cap value '" + value +
                            "' is not a positive integer or 'full'");
        }
        cfg.train.memory_cap_per_task = cap;
      }
      break;
    }
    case SweepAxis::angle: {
      if (base.benchmark.kind != BenchmarkKind::rotated) {
        throw ConfigError("sweep: the angle axis needs benchmark.kind = rotated");
      }
      double angle = 0.0;
      try {
        std::size_t used = 0;
        angle = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (...) {
        throw ConfigError("sweep: angle value '" + value + "' is not a number");
      }
      cfg.benchmark.angle_step = angle;
      break;
    }
  }
  return cfg;
}

/**
 * Runs the configuration once per axis value (all seeds each) and writes
 * `sweep.csv` plus one full run-artifact directory per value. The
 * dissimilarity column averages the anchor-kernel task dissimilarity over
 * tasks 2..T (transitions), the quantity the angle sweep is about.
 */
inline void cmd_sweep(const ExperimentConfig& base, SweepAxis axis,
                      const std::vector<std::string>& values, bool force) {
  namespace fs = std::filesystem;
  if (values.empty()) throw ConfigError("sweep: need at least one axis value");
  base.validate();
  const fs::path out_dir(base.output_dir);
  detail::prepare_output_dir(out_dir, force);

  const char* axis_name = axis == SweepAxis::hidden_size ? "hidden_size"
                          : axis == SweepAxis::memory_cap ? "memory_cap"
                                                          : "angle";
  std::string csv = std::string("value,forgetting_probe_mean,forgetting_probe_std,") +
                    "dissimilarity_mean\n";
  for (const std::string& value : values) {
    const fs::path point_dir = out_dir / (std::string(axis_name) + "_" + value);
    ExperimentConfig cfg = sweep_point_config(base, axis, value, point_dir.string());
    cfg.validate();
    RunOutput run = cmd_run(cfg, force);

    std::vector<double> probes, dissim;
    for (const RunRecord& r : run.records) {
      probes.push_back(r.forgetting_probes.front());
      double s = 0.0;
      const int T = r.statistics.task_count();
      for (int t = 1; t < T; ++t) s += r.statistics.dissimilarities[t];
      dissim.push_back(T > 1 ? s / (T - 1) : 0.0);
    }
    const MeanStd probe_agg = aggregate(probes);
    const MeanStd dissim_agg = aggregate(dissim);
    csv += value + "," + format_double(probe_agg.mean) + "," + format_double(probe_agg.std) +
           "," + format_double(dissim_agg.mean) + "\n";
  }
  detail::write_file(out_dir / "sweep.csv", csv);
}

/** Recomputes the bound decomposition of a stored run record. */
inline nlohmann::json cmd_bounds(const std::string& record_path, double delta,
                                 double lipschitz_c) {
  std::ifstream in(record_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open run record '" + record_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("run record '" + record_path + "' is not valid JSON: " + e.what());
  }
  const RunRecord record = run_record_from_json(j);
  if (!record.linearized) {
    throw ConfigError(
        "bounds require the linearized regime: this record trained the nonlinear network, "
        "whose solution the kernel recursion does not describe");
  }
  nlohmann::json out = bounds_json_from_statistics(record.statistics, delta, lipschitz_c);
  out["seed"] = record.seed;
  return out;
}

/** Aggregates several summary.json files into one plot-ready report.csv. */
inline std::string cmd_report(const std::vector<std::string>& summary_paths) {
  if (summary_paths.empty()) throw ConfigError("report: need at least one summary.json path");
  std::string csv =
      "source,seed_count,acc_mean,acc_std,bwt_mean,bwt_std,fwt_mean,fwt_std,afm_mean,afm_std,"
      "forgetting_probe_mean,forgetting_probe_std\n";
  for (const std::string& path : summary_paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open summary '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("summary '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("schema") || j["schema"] != "summary-v1") {
      throw ConfigError("summary '" + path + "' has an unrecognized schema");
    }
    auto pair_cells = [&](const nlohmann::json& block) {
      if (block.is_null()) return std::string(",");
      return format_double(block["mean"].get<double>()) + "," +
             format_double(block["std"].get<double>());
    };
    csv += path + "," + std::to_string(j["seed_count"].get<std::size_t>()) + "," +
           pair_cells(j["acc"]) + "," + pair_cells(j["bwt"]) + "," + pair_cells(j["fwt"]) + "," +
           pair_cells(j["afm"]) + "," + pair_cells(j["forgetting_probe_task1"]) + "\n";
  }
  return csv;
}

}  // namespace tangentlab
