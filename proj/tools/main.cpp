// Command-line front end: verify / run / sweep / bounds / report.
//
// Exit codes: 0 success, 1 failed verification checks, 2 usage or
// configuration errors.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tangentlab/experiment.hpp"
#include "tangentlab/verify.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : tangentlab::detail::split_list(text)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (...) {
      throw tangentlab::ConfigError("--seeds: '" + item + "' is not an unsigned integer");
    }
  }
  if (seeds.empty()) throw tangentlab::ConfigError("--seeds: need at least one seed");
  return seeds;
}

tangentlab::ExperimentConfig load_config(const std::string& path, const std::string& out_dir,
                                         const std::string& seeds) {
  tangentlab::ExperimentConfig cfg = tangentlab::parse_config_file(path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for continual learning in the tangent regime"};
  app.require_subcommand(1);

  // verify
  std::string suite = "all";
  double tol_override = -1.0;
  CLI::App* verify = app.add_subcommand("verify", "run self-verification suites");
  {
    std::vector<std::string> choices = tangentlab::verify::suite_names();
    choices.push_back("all");
    verify->add_option("suite", suite, "suite name or 'all'")
        ->check(CLI::IsMember(choices));
    verify->add_option("--tol", tol_override,
                       "override every check tolerance with this value");
  }

  // shared run/sweep options
  std::string config_path, out_dir, seeds_text;
  bool force = false;

  CLI::App* run = app.add_subcommand("run", "train the configured task stream");
  run->add_option("--config", config_path, "experiment configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  run->add_option("--seeds", seeds_text, "comma-separated seeds (overrides the config)");
  run->add_flag("--force", force, "allow writing into a nonempty output directory");

  std::string axis_name;
  std::string values_text;
  CLI::App* sweep = app.add_subcommand("sweep", "repeat the run across one swept axis");
  sweep->add_option("--config", config_path, "experiment configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis_name, "hidden_size, memory_cap, or angle")->required();
  sweep->add_option("--values", values_text, "comma-separated axis values")->required();
  sweep->add_option("--out", out_dir, "output directory (overrides the config)");
  sweep->add_option("--seeds", seeds_text, "comma-separated seeds (overrides the config)");
  sweep->add_flag("--force", force, "allow writing into a nonempty output directory");

  std::string record_path;
  double delta = 0.05;
  double lipschitz_c = 1.0;
  CLI::App* bounds = app.add_subcommand("bounds", "recompute bounds from a stored run record");
  bounds->add_option("record", record_path, "run_record_<seed>.json from a previous run")
      ->required()
      ->check(CLI::ExistingFile);
  bounds->add_option("--delta", delta, "probability budget in (0,1)");
  bounds->add_option("--lipschitz", lipschitz_c, "loss Lipschitz constant");
  bounds->add_option("--out", out_dir, "write bounds.json here instead of stdout");
  bounds->add_flag("--force", force, "allow writing into a nonempty output directory");

  std::vector<std::string> summary_paths;
  CLI::App* report = app.add_subcommand("report", "aggregate summary.json files into report.csv");
  report->add_option("summaries", summary_paths, "summary.json paths")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--out", out_dir, "write report.csv here instead of stdout");
  report->add_flag("--force", force, "allow writing into a nonempty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*verify) {
      const std::vector<tangentlab::verify::SuiteReport> reports =
          tangentlab::verify::run_suites(suite, tol_override);
      std::cout << tangentlab::verify::format_reports(reports);
      for (const tangentlab::verify::SuiteReport& r : reports) {
        if (!r.all_pass()) return 1;
      }
      return 0;
    }

    if (*run) {
      const tangentlab::ExperimentConfig cfg = load_config(config_path, out_dir, seeds_text);
      const auto start = std::chrono::steady_clock::now();
      tangentlab::cmd_run(cfg, force);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const std::filesystem::path dir(cfg.output_dir);
      std::cout << "wrote " << (dir / "metrics.csv").string() << "\n";
      for (std::uint64_t seed : cfg.seeds) {
        std::cout << "wrote "
                  << (dir / ("accuracy_matrix_" + std::to_string(seed) + ".csv")).string()
                  << "\n";
        std::cout << "wrote "
                  << (dir / ("run_record_" + std::to_string(seed) + ".json")).string() << "\n";
      }
      std::cout << "wrote " << (dir / "bounds.json").string() << "\n";
      std::cout << "wrote " << (dir / "config_resolved.json").string() << "\n";
      std::cout << "wrote " << (dir / "summary.json").string() << "\n";
      std::cout << "completed " << cfg.seeds.size() << " seed(s) in " << secs << " s\n";
      return 0;
    }

    if (*sweep) {
      const tangentlab::ExperimentConfig cfg = load_config(config_path, out_dir, seeds_text);
      const tangentlab::SweepAxis axis = tangentlab::parse_sweep_axis(axis_name);
      const std::vector<std::string> values = tangentlab::detail::split_list(values_text);
      const auto start = std::chrono::steady_clock::now();
      tangentlab::cmd_sweep(cfg, axis, values, force);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << "wrote " << (std::filesystem::path(cfg.output_dir) / "sweep.csv").string()
                << "\n";
      std::cout << "completed " << values.size() << " sweep point(s) in " << secs << " s\n";
      return 0;
    }

    if (*bounds) {
      const nlohmann::json j = tangentlab::cmd_bounds(record_path, delta, lipschitz_c);
      if (out_dir.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        tangentlab::detail::prepare_output_dir(out_dir, force);
        tangentlab::detail::write_file(std::filesystem::path(out_dir) / "bounds.json",
                                       j.dump(2) + "\n");
        std::cout << "wrote " << (std::filesystem::path(out_dir) / "bounds.json").string()
                  << "\n";
      }
      return 0;
    }

    if (*report) {
      const std::string csv = tangentlab::cmd_report(summary_paths);
      if (out_dir.empty()) {
        std::cout << csv;
      } else {
        tangentlab::detail::prepare_output_dir(out_dir, force);
        tangentlab::detail::write_file(std::filesystem::path(out_dir) / "report.csv", csv);
        std::cout << "wrote " << (std::filesystem::path(out_dir) / "report.csv").string()
                  << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
