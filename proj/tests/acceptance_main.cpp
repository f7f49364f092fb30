// Release gate for the laboratory: twelve behavioural criteria, one verdict
// line each, exit nonzero if any fails. The first argument must be the path
// of the command-line binary; the artifact-determinism criterion drives it
// as a subprocess. Everything else runs in-process against the headers.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "oracles.hpp"
#include "tangentlab/verify.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using tangentlab::Algorithm;
using tangentlab::ContinualRunResult;
using tangentlab::ContinualSolution;
using tangentlab::LinearizedModel;
using tangentlab::Mlp;
using tangentlab::Regime;
using tangentlab::TaskDataset;
using tangentlab::TrainConfig;
using tangentlab::WeightVector;

int g_failures = 0;

void verdict(int index, bool pass, const std::string& text) {
  std::printf("%s [%2d] %s\n", pass ? "PASS" : "FAIL", index, text.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct SuiteOutcome {
  bool pass = false;
  int passed = 0;
  int total = 0;
  double worst = 0.0;  // largest measured value over the suite's checks
  double seconds = 0.0;
};

SuiteOutcome run_gate_suite(const std::string& name) {
  const Clock::time_point t0 = Clock::now();
  const tangentlab::verify::SuiteReport report = tangentlab::verify::run_suite(name);
  SuiteOutcome out;
  out.pass = report.all_pass();
  out.passed = report.passed();
  out.total = static_cast<int>(report.checks.size());
  out.worst = -1e300;
  for (const auto& check : report.checks) out.worst = std::max(out.worst, check.measured);
  out.seconds = seconds_since(t0);
  return out;
}

std::string suite_text(const SuiteOutcome& o) {
  return std::to_string(o.passed) + "/" + std::to_string(o.total) + " checks, worst " +
         num(o.worst) + ", " + num(o.seconds) + " s";
}

/** Permuted or rotated task stream matching the fixed-instance convention. */
std::vector<TaskDataset> make_stream(bool rotated, std::uint64_t dataset_seed, int n, int d,
                                     int classes, int T, double angle_step) {
  return tangentlab::verify::detail::stream(rotated, dataset_seed, n, d, classes, T, angle_step);
}

TrainConfig nonlinear_config(Algorithm algorithm, long steps, int memory_cap,
                             std::uint64_t seed) {
  TrainConfig cfg;
  cfg.algorithm = algorithm;
  cfg.learning_rate_auto = true;
  cfg.auto_lr_factor = 0.9;
  cfg.ridge = 0.0;
  cfg.steps_per_task = steps;
  cfg.convergence_tolerance = 1e-7;
  cfg.regime = Regime::nonlinear;
  cfg.seed = seed;
  cfg.memory_cap_per_task = memory_cap;
  return cfg;
}

struct TrendCheck {
  bool pass = false;
  int dips = 0;
  double worst_dip = 0.0;
};

/** Nondecreasing means, allowing a single adjacent dip of at most dip_tol. */
TrendCheck nondecreasing_trend(const std::vector<double>& means, double dip_tol) {
  TrendCheck t;
  for (std::size_t i = 0; i + 1 < means.size(); ++i) {
    if (means[i + 1] < means[i]) {
      ++t.dips;
      t.worst_dip = std::max(t.worst_dip, means[i] - means[i + 1]);
    }
  }
  t.pass = t.dips == 0 || (t.dips == 1 && t.worst_dip <= dip_tol);
  return t;
}

std::string join_means(const std::vector<double>& means) {
  std::string s;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (i) s += " ";
    s += num(means[i]);
  }
  return s;
}

struct SeedStats {
  double mean = 0.0;
  double stdev = 0.0;  // population standard deviation over the seed set
};

SeedStats stats_of(const std::vector<double>& values) {
  SeedStats s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.stdev += (v - s.mean) * (v - s.mean);
  s.stdev = std::sqrt(s.stdev / static_cast<double>(values.size()));
  return s;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

CommandResult run_cli(const std::string& binary, const std::string& args) {
  const std::string cmd = binary + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed for: " + cmd);
  CommandResult result;
  char buffer[4096];
  while (std::fgets(buffer, sizeof(buffer), pipe) != nullptr) result.output += buffer;
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::map<std::string, std::string> snapshot_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    files[entry.path().filename().string()] = body.str();
  }
  return files;
}

// ---------------------------------------------------------------------------

void criterion_1_closed_form_recursion() {
  const SuiteOutcome o = run_gate_suite("theorem1");
  const bool in_budget = o.seconds <= 120.0;
  verdict(1, o.pass && in_budget,
          "trained networks match the recursive ridge solution on train and held-out points: " +
              suite_text(o) + " (budget 120 s)");
}

void criterion_2_no_forgetting() {
  const SuiteOutcome o = run_gate_suite("theorem2");
  const bool in_budget = o.seconds <= 60.0;
  verdict(2, o.pass && in_budget,
          "full-memory projected training never disturbs memorized predictions: " +
              suite_text(o) + " (budget 60 s)");
}

void criterion_3_weight_displacement() {
  const SuiteOutcome o = run_gate_suite("corollary1");
  verdict(3, o.pass,
          "weight displacement norms equal their dual-coefficient identity: " + suite_text(o));
}

void criterion_4_gradient_orthogonality() {
  const SuiteOutcome o = run_gate_suite("proposition1");
  verdict(4, o.pass,
          "projected updates stay orthogonal to memorized-task gradients, unprojected do not: " +
              suite_text(o));
}

void criterion_5_train_loss_terms() {
  const tangentlab::verify::SuiteReport report = tangentlab::verify::run_suite("bounds");
  int total = 0;
  int passed = 0;
  double worst = -1e300;
  for (const auto& check : report.checks) {
    if (check.name.find("train_loss_within_bound_terms") == std::string::npos) continue;
    ++total;
    passed += check.pass ? 1 : 0;
    worst = std::max(worst, check.measured);
  }
  const bool pass = total == 18 && passed == total;
  verdict(5, pass,
          "final train losses stay within their per-task bound terms (projected and not): " +
              std::to_string(passed) + "/" + std::to_string(total) + " instance checks, worst " +
              num(worst) + " (slack 1e-8)");
}

void criterion_6_stable_rate() {
  const SuiteOutcome o = run_gate_suite("lemma7");
  verdict(6, o.pass,
          "ridge-free training interpolates below the stable rate and diverges at 2.5x: " +
              suite_text(o));
}

void criterion_7_bound_gap_identity() {
  using tangentlab::verify::detail::closed_form_instances;
  using tangentlab::verify::detail::net_of;
  double worst_gap_error = 0.0;
  double min_gap = 1e300;
  int sequences = 0;
  for (const auto& s : closed_form_instances()) {
    const Mlp net = net_of(s);
    const auto tasks = make_stream(s.rotated, s.dseed, s.n, s.d, s.c, s.T, 20.0);
    const WeightVector w0 = tangentlab::init_weights(net, tangentlab::derive_seed(s.wseed, 0));
    const LinearizedModel lin = tangentlab::linearize(net, w0, tasks.front());
    const ContinualSolution sol =
        tangentlab::solve_stream(lin, tasks, s.ridge, s.algorithm != Algorithm::sgd);
    const double n_last = sol.tasks.back().n();
    for (int tau = 1; tau <= s.T; ++tau) {
      const auto with_memory = tangentlab::generalisation_bound(sol, Algorithm::ogd, tau, 0.05, 1.0);
      const auto without = tangentlab::generalisation_bound(sol, Algorithm::sgd, tau, 0.05, 1.0);
      const double gap = without.total_bound - with_memory.total_bound;
      double interference = 0.0;
      for (int k = tau + 1; k <= s.T; ++k) {
        interference += tangentlab::forgetting_term(sol, k, tau);
      }
      interference /= n_last;
      worst_gap_error = std::max(worst_gap_error, std::abs(gap - interference));
      min_gap = std::min(min_gap, gap);
    }
    ++sequences;
  }
  const bool pass = worst_gap_error <= 1e-10 && min_gap >= 0.0;
  verdict(7, pass,
          "unprojected-minus-projected bound gap equals the scaled interference sum: " +
              std::to_string(sequences) + " sequences, worst |gap - sum| " + num(worst_gap_error) +
              " (tol 1e-10), min gap " + num(min_gap) + " >= 0");
}

void criterion_8_width_trend() {
  const Clock::time_point t0 = Clock::now();
  const auto tasks = make_stream(false, 59, 40, 8, 4, 8, 0.0);
  std::vector<double> means;
  for (int hidden : {16, 32, 64, 128}) {
    const Mlp net{{8, hidden, 4}, tangentlab::Activation::relu, true};
    double sum = 0.0;
    for (std::uint64_t seed = 19; seed <= 23; ++seed) {
      const TrainConfig cfg = nonlinear_config(Algorithm::ogd, 20000, 25, seed);
      const ContinualRunResult run = tangentlab::run_continual(net, tasks, cfg);
      sum += tangentlab::forgetting_probe(run, 1);
    }
    means.push_back(sum / 5.0);
  }
  const TrendCheck trend = nondecreasing_trend(means, 0.01);
  const double elapsed = seconds_since(t0);
  const bool pass = trend.pass && elapsed <= 600.0;
  verdict(8, pass,
          "wider networks forget task 1 no more (probe means over widths 16/32/64/128): " +
              join_means(means) + ", dips " + std::to_string(trend.dips) + " (worst " +
              num(trend.worst_dip) + ", allowed one <= 0.01), " + num(elapsed) +
              " s (budget 600 s)");
}

SeedStats forgetting_stats(const Mlp& net, const std::vector<TaskDataset>& tasks,
                           Algorithm algorithm) {
  std::vector<double> afms;
  for (std::uint64_t seed = 19; seed <= 23; ++seed) {
    const TrainConfig cfg = nonlinear_config(algorithm, 8000, 8, seed);
    const ContinualRunResult run = tangentlab::run_continual(net, tasks, cfg);
    afms.push_back(tangentlab::metrics(run).afm.value());
  }
  return stats_of(afms);
}

void criterion_9_refresh_regimes() {
  // same rotated stream family at two parameter-to-sample ratios
  const auto low_tasks = make_stream(true, 59, 60, 8, 2, 6, 25.0);
  const Mlp low_net{{8, 16, 2}, tangentlab::Activation::relu, true};
  std::vector<int> low_sizes;
  for (const auto& t : low_tasks) low_sizes.push_back(t.train_count());
  const double low_ratio = tangentlab::overparameterization(low_net.param_count(), low_sizes);

  const auto high_tasks = make_stream(true, 59, 25, 8, 2, 6, 25.0);
  const Mlp high_net{{8, 128, 2}, tangentlab::Activation::relu, true};
  std::vector<int> high_sizes;
  for (const auto& t : high_tasks) high_sizes.push_back(t.train_count());
  const double high_ratio = tangentlab::overparameterization(high_net.param_count(), high_sizes);

  const SeedStats low_plain = forgetting_stats(low_net, low_tasks, Algorithm::ogd);
  const SeedStats low_refresh = forgetting_stats(low_net, low_tasks, Algorithm::ogd_plus);
  const SeedStats high_plain = forgetting_stats(high_net, high_tasks, Algorithm::ogd);
  const SeedStats high_refresh = forgetting_stats(high_net, high_tasks, Algorithm::ogd_plus);

  const double margin = low_plain.mean - low_refresh.mean;
  const double high_diff = std::abs(high_plain.mean - high_refresh.mean);
  const double high_band = std::max(high_plain.stdev, high_refresh.stdev);
  const bool pass = low_ratio < 4.0 && margin >= 0.0 && high_ratio > 50.0 &&
                    high_diff <= high_band;
  verdict(9, pass,
          "gradient-refreshing projection forgets no more when parameters are scarce: ratio " +
              num(low_ratio) + " < 4, refresh " + num(low_refresh.mean) + " vs plain " +
              num(low_plain.mean) + " (margin " + num(margin) + " >= 0); at ratio " +
              num(high_ratio) + " > 50 the two agree within one std (|diff| " + num(high_diff) +
              " <= " + num(high_band) + ")");
}

void criterion_10_memory_trend() {
  const auto tasks = make_stream(false, 59, 130, 8, 4, 6, 0.0);
  const Mlp net{{8, 64, 4}, tangentlab::Activation::relu, true};
  std::vector<double> means;
  for (int cap : {10, 50, 100, tangentlab::kFullMemory}) {
    double sum = 0.0;
    for (std::uint64_t seed = 19; seed <= 23; ++seed) {
      const TrainConfig cfg = nonlinear_config(Algorithm::ogd, 4000, cap, seed);
      const ContinualRunResult run = tangentlab::run_continual(net, tasks, cfg);
      sum += tangentlab::forgetting_probe(run, 1);
    }
    means.push_back(sum / 5.0);
  }
  const TrendCheck trend = nondecreasing_trend(means, 0.01);
  verdict(10, trend.pass,
          "larger gradient memories forget task 1 no more (probe means over caps "
          "10/50/100/full): " +
              join_means(means) + ", dips " + std::to_string(trend.dips) + " (worst " +
              num(trend.worst_dip) + ", allowed one <= 0.01)");
}

void criterion_11_scoreboard_metrics() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> task_count(1, 6);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = task_count(gen);
    Eigen::MatrixXd acc(T, T);
    Eigen::VectorXd baseline(T);
    for (int i = 0; i < T; ++i) {
      baseline[i] = unif(gen);
      for (int j = 0; j < T; ++j) acc(i, j) = unif(gen);
    }
    const tangentlab::MetricsReport lib = tangentlab::metrics(acc, baseline);
    const oracle::Metrics brute = oracle::metrics(acc, baseline);
    bool same = lib.acc == brute.acc && lib.bwt.has_value() == brute.has_rest;
    if (same && brute.has_rest) {
      same = *lib.bwt == brute.bwt && *lib.fwt == brute.fwt && *lib.afm == brute.afm;
    }
    if (!same) ++mismatches;
  }

  // worked two-task example: compare against the defining arithmetic
  Eigen::MatrixXd acc2(2, 2);
  acc2 << 0.9, 0.7, 0.8, 0.95;
  Eigen::VectorXd base2(2);
  base2 << 0.5, 0.6;
  const tangentlab::MetricsReport rep = tangentlab::metrics(acc2, base2);
  const bool worked = rep.acc == 0.875 && *rep.bwt == (0.8 - 0.9) && *rep.afm == (0.9 - 0.8) &&
                      *rep.fwt == (0.7 - 0.6);
  verdict(11, mismatches == 0 && worked,
          "scoreboard metrics equal brute-force recomputation on 1000 random matrices (" +
              std::to_string(1000 - mismatches) +
              "/1000 exact) and the worked two-task example (acc 0.875, bwt -0.1, afm 0.1, "
              "fwt 0.1)");
}

void criterion_12_artifact_determinism(const std::string& binary) {
  const fs::path scratch = fs::temp_directory_path() / "tangentlab_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const fs::path out_dir = scratch / "run";
  const fs::path cfg_path = scratch / "demo.ini";
  {
    std::ofstream cfg(cfg_path);
    cfg << "[benchmark]\n"
           "kind = rotated\n"
           "num_tasks = 2\n"
           "n = 16\n"
           "d = 4\n"
           "classes = 2\n"
           "dataset_seed = 11\n"
           "angle_step = 20\n"
           "\n[network]\n"
           "hidden = 8\n"
           "\n[train]\n"
           "algorithm = ogd\n"
           "regime = linearized\n"
           "learning_rate = auto\n"
           "ridge = 0.1\n"
           "steps_per_task = 30000\n"
           "convergence_tolerance = 1e-9\n"
           "\n[output]\n"
           "dir = "
        << out_dir.string()
        << "\n"
           "\n[run]\n"
           "seeds = 3, 5\n";
  }
  const CommandResult first = run_cli(binary, "run --config '" + cfg_path.string() + "'");
  if (first.exit_code != 0) {
    verdict(12, false, "artifact determinism: first run exited " +
                           std::to_string(first.exit_code) + ": " + first.output);
    return;
  }
  const auto before = snapshot_files(out_dir);
  const CommandResult second =
      run_cli(binary, "run --config '" + cfg_path.string() + "' --force");
  if (second.exit_code != 0) {
    verdict(12, false, "artifact determinism: rerun exited " +
                           std::to_string(second.exit_code) + ": " + second.output);
    return;
  }
  const auto after = snapshot_files(out_dir);
  int identical = 0;
  std::string first_diff;
  for (const auto& [name, body] : before) {
    const auto it = after.find(name);
    if (it != after.end() && it->second == body) {
      ++identical;
    } else if (first_diff.empty()) {
      first_diff = name;
    }
  }
  const bool pass = before.size() >= 6 && after.size() == before.size() &&
                    identical == static_cast<int>(before.size());
  std::string text = "repeated runs with one config and seed set produce byte-identical "
                     "artifacts: " +
                     std::to_string(identical) + "/" + std::to_string(before.size()) +
                     " files identical across a forced rerun";
  if (!first_diff.empty()) text += " (first difference: " + first_diff + ")";
  verdict(12, pass, text);
  fs::remove_all(scratch);
}

void run_criterion(int index, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    verdict(index, false, std::string("unexpected error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-cli-binary>\n", argv[0]);
    return 2;
  }
  const std::string binary = argv[1];
  std::printf("acceptance gate: twelve release criteria\n");
  std::fflush(stdout);

  run_criterion(1, [] { criterion_1_closed_form_recursion(); });
  run_criterion(2, [] { criterion_2_no_forgetting(); });
  run_criterion(3, [] { criterion_3_weight_displacement(); });
  run_criterion(4, [] { criterion_4_gradient_orthogonality(); });
  run_criterion(5, [] { criterion_5_train_loss_terms(); });
  run_criterion(6, [] { criterion_6_stable_rate(); });
  run_criterion(7, [] { criterion_7_bound_gap_identity(); });
  run_criterion(8, [] { criterion_8_width_trend(); });
  run_criterion(9, [] { criterion_9_refresh_regimes(); });
  run_criterion(10, [] { criterion_10_memory_trend(); });
  run_criterion(11, [] { criterion_11_scoreboard_metrics(); });
  run_criterion(12, [&] { criterion_12_artifact_determinism(binary); });

  std::printf("acceptance: %d/12 criteria passed\n", 12 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
