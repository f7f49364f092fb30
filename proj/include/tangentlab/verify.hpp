#pragma once

// Seeded property suites behind the `verify` subcommand. Each suite replays
// the library's core guarantees on fixed instances and reports one
// pass/fail line per check: a check passes iff measured <= tolerance, where
// "measured" is always a defect magnitude (zero when the property holds
// exactly). Reports contain no timings or environment data, so two runs of
// the same build produce byte-identical text.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tangentlab/diagnostics.hpp"
#include "tangentlab/format.hpp"
#include "tangentlab/trainer.hpp"

namespace tangentlab::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;  // short human-readable context, deterministic
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  int passed() const {
    int k = 0;
    for (const CheckResult& c : checks) k += c.pass ? 1 : 0;
    return k;
  }
  bool all_pass() const { return passed() == static_cast<int>(checks.size()); }
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"theorem1", "theorem2",     "corollary1",
                                                 "lemma7",   "proposition1", "bounds"};
  return names;
}

namespace detail {

inline CheckResult check(std::string name, double measured, double tolerance,
                         std::string detail_text, double tol_override) {
  if (tol_override >= 0.0) tolerance = tol_override;
  CheckResult r;
  r.name = std::move(name);
  r.measured = measured;
  r.tolerance = tolerance;
  r.pass = measured <= tolerance;
  r.detail = std::move(detail_text);
  return r;
}

/** Streams used by the suites: coordinate-permuted or plane-rotated copies. */
inline std::vector<TaskDataset> stream(bool rotated, std::uint64_t dseed, int n, int d, int c,
                                       int T, double angle_step) {
  TaskDataset base = generate_base(dseed, n, d, c);
  std::vector<TaskDataset> tasks;
  for (int t = 0; t < T; ++t) {
    TaskDataset task = rotated ? rotate_task(base, angle_step * t) : permute_task(base, t);
    task.task_id = t + 1;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

struct InstanceSpec {
  int d, h, c, n, T;
  double ridge;
  Algorithm algorithm;
  bool rotated;
  std::uint64_t dseed, wseed;
};

/** The fixed instance grid for the trainer-vs-closed-form suites. */
inline std::vector<InstanceSpec> closed_form_instances() {
  // covers both algorithms, both stream kinds, ridges {0, 0.1, 1} and
  // T in 2..4 while staying convergence-feasible on a step budget: a
  // ridge-free projected second task needs a well-conditioned projected
  // kernel, so those instances pair wide nets with small sample counts
  // (stored-feature complement stays high-dimensional). One instance
  // stresses p ~ 600. Everything is seeded and fixed.
  using A = Algorithm;
  return {
      //           d   h   c   n  T  ridge  algorithm  rotated  dseed wseed
      InstanceSpec{4, 16, 2, 20, 2, 0.0, A::sgd, false, 100, 200},
      InstanceSpec{5, 12, 2, 24, 3, 0.0, A::sgd, true, 101, 201},
      InstanceSpec{6, 20, 3, 16, 4, 0.0, A::sgd, false, 102, 202},
      InstanceSpec{6, 40, 2, 12, 2, 0.0, A::ogd, false, 103, 203},
      InstanceSpec{5, 48, 2, 12, 2, 0.0, A::ogd, false, 104, 204},
      InstanceSpec{6, 44, 3, 12, 3, 0.0, A::ogd, false, 105, 205},
      InstanceSpec{4, 16, 2, 24, 2, 0.1, A::ogd, true, 106, 206},
      InstanceSpec{5, 20, 3, 28, 3, 0.1, A::ogd, false, 107, 207},
      InstanceSpec{6, 24, 2, 20, 4, 0.1, A::ogd, true, 108, 208},
      InstanceSpec{4, 12, 2, 28, 2, 0.1, A::sgd, false, 109, 209},
      InstanceSpec{5, 16, 3, 16, 3, 0.1, A::sgd, true, 110, 210},
      InstanceSpec{6, 20, 2, 24, 4, 0.1, A::sgd, false, 111, 211},
      InstanceSpec{4, 24, 2, 20, 2, 1.0, A::ogd, false, 112, 212},
      InstanceSpec{5, 12, 3, 24, 3, 1.0, A::ogd, true, 113, 213},
      InstanceSpec{6, 16, 2, 28, 4, 1.0, A::ogd, false, 114, 214},
      InstanceSpec{4, 20, 3, 16, 2, 1.0, A::sgd, true, 115, 215},
      InstanceSpec{5, 24, 2, 20, 3, 1.0, A::sgd, false, 116, 216},
      InstanceSpec{6, 12, 2, 24, 4, 1.0, A::sgd, true, 117, 217},
      InstanceSpec{5, 32, 3, 20, 3, 0.1, A::ogd, true, 118, 218},
      // widest: p = (6+1)*64 + (64+1)*2 = 578 parameters, T=4, n=50
      InstanceSpec{6, 64, 2, 50, 4, 0.1, A::ogd, true, 119, 219},
  };
}

inline Mlp net_of(const InstanceSpec& s) {
  return Mlp{{s.d, s.h, s.c}, Activation::relu, true};
}

inline TrainConfig tight_config(const InstanceSpec& s) {
  TrainConfig cfg;
  cfg.algorithm = s.algorithm;
  cfg.learning_rate_auto = true;
  cfg.auto_lr_factor = 0.9;
  cfg.ridge = s.ridge;
  cfg.steps_per_task = 300000;
  cfg.convergence_tolerance = 1e-11;
  cfg.regime = Regime::linearized;
  cfg.seed = s.wseed;
  cfg.memory_cap_per_task = kFullMemory;
  return cfg;
}

/**
 * Instances for the train-loss bound checks. The per-task loss terms of the
 * generalisation bound are only inequalities where the kernel scale dominates
 * the identity
 * (the dual-norm step needs spectrum(kernel + ridge I) on the residual
 * targets to sit at or above 1) and where interference cross terms do not
 * align positively, so this family pins wide networks with small task sizes
 * inside that domain; margins are part of the verified output. Both the
 * projected and unprojected solutions are checked on every instance (the
 * algorithm field is ignored).
 */
inline std::vector<InstanceSpec> bounds_instances() {
  using A = Algorithm;
  return {
      //           d   h   c   n  T  ridge  algorithm  rotated  dseed wseed
      InstanceSpec{4, 64, 2, 12, 2, 0.0, A::sgd, true, 305, 405},
      InstanceSpec{5, 64, 2, 12, 3, 0.0, A::sgd, false, 341, 441},
      InstanceSpec{4, 64, 2, 10, 4, 0.0, A::sgd, false, 325, 425},
      InstanceSpec{4, 64, 2, 12, 2, 0.1, A::sgd, true, 301, 401},
      InstanceSpec{5, 64, 2, 12, 3, 0.1, A::sgd, false, 303, 403},
      InstanceSpec{5, 48, 3, 14, 3, 0.1, A::sgd, false, 324, 424},
      InstanceSpec{4, 64, 2, 12, 2, 1.0, A::sgd, false, 308, 408},
      InstanceSpec{5, 48, 3, 14, 3, 1.0, A::sgd, false, 333, 433},
      InstanceSpec{4, 56, 2, 12, 4, 1.0, A::sgd, false, 310, 410},
  };
}

/**
 * Worst per-task excess of the end-of-sequence train loss over its bound
 * term: ridge^2/n * dissimilarity, plus the interference sum / n for
 * unprojected training on non-final tasks. Negative means bounded with margin.
 */
inline double train_loss_bound_excess(const ContinualSolution& sol, bool projected) {
  double worst = -1e300;
  const int T = sol.task_count();
  for (int tau = 1; tau <= T; ++tau) {
    const TaskSolution& ts = sol.tasks[tau - 1];
    double rhs = ts.ridge * ts.ridge / ts.n() * ntk_dissimilarity(ts);
    if (!projected && tau < T) {
      for (int k = tau + 1; k <= T; ++k) rhs += forgetting_term(sol, k, tau) / ts.n();
    }
    worst = std::max(worst, final_train_loss(sol, tau) - rhs);
  }
  return worst;
}

/** Max |trainer prediction - recursive prediction| over train + probe rows. */
inline double closed_form_gap(const InstanceSpec& s, const ContinualRunResult& run,
                              const std::vector<TaskDataset>& tasks) {
  const Mlp net = net_of(s);
  LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
  ContinualSolution sol =
      solve_stream(lin, tasks, s.ridge, s.algorithm != Algorithm::sgd, kFullMemory);
  const WeightVector& w_final = run.weight_checkpoints.back();
  double gap = 0.0;
  auto probe_rows = [&](const Eigen::MatrixXd& X, const std::vector<int>& gtls) {
    for (int i = 0; i < X.rows(); ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      const double trained = lin.predict(w_final, x, gtls[i]);
      const double recursive = predict_recursive(sol, x, gtls[i]);
      gap = std::max(gap, std::abs(trained - recursive));
    }
  };
  for (const TaskDataset& task : tasks) {
    probe_rows(task.rows(task.train_idx), task.gtl_of(task.train_idx));
  }
  const TaskDataset held_out = generate_base(derive_seed(s.dseed, 77), 50, s.d, s.c);
  probe_rows(held_out.inputs, held_out.gtl);
  return gap;
}

}  // namespace detail

/** Trained linearized models match the recursive kernel predictor. */
inline SuiteReport suite_theorem1(double tol) {
  SuiteReport report{"theorem1", {}};
  const auto specs = detail::closed_form_instances();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const detail::InstanceSpec& s = specs[i];
    const Mlp net = detail::net_of(s);
    const auto tasks = detail::stream(s.rotated, s.dseed, s.n, s.d, s.c, s.T, 20.0);
    ContinualRunResult run = run_continual(net, tasks, detail::tight_config(s));
    const double gap = detail::closed_form_gap(s, run, tasks);
    std::string label = i < 9 ? "0" + std::to_string(i + 1) : std::to_string(i + 1);
    report.checks.push_back(detail::check(
        "theorem1/trainer_matches_recursive_" + label, gap, 1e-5,
        (s.algorithm == Algorithm::sgd ? std::string("unprojected") : std::string("projected")) +
            " ridge=" + format_double(s.ridge) + " T=" + std::to_string(s.T) +
            " p=" + std::to_string(net.param_count()),
        tol));
  }
  return report;
}

/** Projected training leaves every memorized prediction unchanged. */
inline SuiteReport suite_theorem2(double tol) {
  SuiteReport report{"theorem2", {}};
  for (bool rotated : {false, true}) {
    detail::InstanceSpec s{6,    16,  3,   20,          5,
                           0.0,  Algorithm::ogd, rotated, 301, 401};
    if (rotated) s.ridge = 0.1;
    const Mlp net = detail::net_of(s);
    const auto tasks = detail::stream(s.rotated, s.dseed, s.n, s.d, s.c, s.T, 25.0);
    ContinualRunResult run = run_continual(net, tasks, detail::tight_config(s));
    LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());

    // prediction of the model after task k on every sample memorized by then,
    // versus the final model: the projector freezes them all
    double worst = 0.0;
    const WeightVector& w_final = run.weight_checkpoints.back();
    for (int k = 1; k <= s.T; ++k) {
      const WeightVector& w_k = run.weight_checkpoints[k - 1];
      for (const MemorySample& m : run.memory.samples.entries) {
        if (m.task_id > k) continue;
        const double at_k = lin.predict(w_k, m.x, m.gtl);
        const double at_end = lin.predict(w_final, m.x, m.gtl);
        worst = std::max(worst, std::abs(at_end - at_k));
      }
    }
    report.checks.push_back(detail::check(
        std::string("theorem2/memorized_predictions_frozen_") +
            (rotated ? "rotated" : "permuted"),
        worst, 1e-6,
        "T=5 full memory, ridge=" + format_double(s.ridge), tol));
  }
  return report;
}

/** Per-task weight displacement matches the kernel quadratic form. */
inline SuiteReport suite_corollary1(double tol) {
  SuiteReport report{"corollary1", {}};
  const auto specs = detail::closed_form_instances();
  for (std::size_t i = 0; i < 10; ++i) {
    const detail::InstanceSpec& s = specs[i];
    const Mlp net = detail::net_of(s);
    const auto tasks = detail::stream(s.rotated, s.dseed, s.n, s.d, s.c, s.T, 20.0);
    ContinualRunResult run = run_continual(net, tasks, detail::tight_config(s));
    LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
    ContinualSolution sol =
        solve_stream(lin, tasks, s.ridge, s.algorithm != Algorithm::sgd, kFullMemory);
    double worst = 0.0;
    WeightVector prev = run.initial_weights;
    for (int t = 0; t < s.T; ++t) {
      const double trained = (run.weight_checkpoints[t] - prev).squaredNorm();
      const double closed = weight_distance_sq(sol.tasks[t]);
      worst = std::max(worst, std::abs(trained - closed) / std::max(1.0, closed));
      prev = run.weight_checkpoints[t];
    }
    std::string label = i < 9 ? "0" + std::to_string(i + 1) : std::to_string(i + 1);
    report.checks.push_back(detail::check(
        "corollary1/weight_displacement_matches_" + label, worst, 1e-6,
        "relative, ridge=" + format_double(s.ridge) + " T=" + std::to_string(s.T), tol));
  }
  return report;
}

/** Stable-rate convergence; an oversized rate provably diverges. */
inline SuiteReport suite_lemma7(double tol) {
  SuiteReport report{"lemma7", {}};
  for (int i = 0; i < 10; ++i) {
    detail::InstanceSpec s{4 + (i % 3),
                           12 + 4 * (i % 3),
                           2,
                           16 + 4 * (i % 3),
                           1,
                           0.0,
                           Algorithm::sgd,
                           (i % 2) == 0,
                           500 + static_cast<std::uint64_t>(i),
                           600 + static_cast<std::uint64_t>(i)};
    const Mlp net = detail::net_of(s);
    const auto tasks = detail::stream(s.rotated, s.dseed, s.n, s.d, s.c, 1, 20.0);
    TrainConfig cfg = detail::tight_config(s);
    cfg.steps_per_task = 100000;
    cfg.convergence_tolerance = 0.0;  // run on the step budget alone
    ContinualRunResult run = run_continual(net, tasks, cfg);
    std::string label = i < 9 ? "0" + std::to_string(i + 1) : std::to_string(i + 1);
    report.checks.push_back(detail::check(
        "lemma7/interpolation_reached_" + label, run.task_stats[0].final_loss, 1e-6,
        "ridge=0, rate=0.9*stable, steps<=1e5", tol));
  }

  // the same problem with a 2.5x stable rate must blow past the guard
  {
    detail::InstanceSpec s{5, 16, 2, 20, 1, 0.0, Algorithm::sgd, false, 500, 600};
    const Mlp net = detail::net_of(s);
    const auto tasks = detail::stream(false, s.dseed, s.n, s.d, s.c, 1, 0.0);
    const WeightVector w0 = init_weights(net, derive_seed(s.wseed, 0));
    LinearizedModel lin = linearize(net, w0, tasks.front());
    const TaskDataset& task = tasks.front();
    Eigen::MatrixXd F = lin.feature_matrix(task.rows(task.train_idx), task.gtl_of(task.train_idx));
    const double stable = max_stable_lr(gram_sym(F), 0.0);
    TrainConfig cfg = detail::tight_config(s);
    cfg.learning_rate_auto = false;
    cfg.learning_rate = 2.5 * stable;
    cfg.steps_per_task = 100000;
    cfg.convergence_tolerance = 0.0;
    bool diverged = false;
    try {
      run_continual(net, tasks, cfg);
    } catch (const DivergenceError&) {
      diverged = true;
    }
    report.checks.push_back(detail::check("lemma7/oversized_rate_diverges", diverged ? 0.0 : 1.0,
                                          0.0, "rate=2.5*stable trips the loss guard", tol));
  }
  return report;
}

/** Projected training drives every memorized-task gradient to zero. */
inline SuiteReport suite_proposition1(double tol) {
  SuiteReport report{"proposition1", {}};
  detail::InstanceSpec s{6, 20, 3, 20, 3, 0.0, Algorithm::ogd, false, 701, 801};
  const Mlp net = detail::net_of(s);
  const auto tasks = detail::stream(false, s.dseed, s.n, s.d, s.c, s.T, 0.0);

  auto memory_gradient_ratio = [&](Algorithm alg) {
    detail::InstanceSpec v = s;
    v.algorithm = alg;
    TrainConfig cfg = detail::tight_config(v);
    if (alg == Algorithm::sgd) {
      // the unprojected contrast needs samples in memory even though sgd
      // does not project; replay the projected memory bookkeeping manually
      cfg.algorithm = Algorithm::sgd;
    }
    ContinualRunResult run = run_continual(net, tasks, cfg);
    LinearizedModel lin = linearize(net, run.initial_weights, tasks.front());
    const WeightVector& w_final = run.weight_checkpoints.back();
    double worst = 0.0;
    for (int t = 1; t < s.T; ++t) {  // all tasks except the last
      // reference scale: the same gradient at initialization
      SampleMemory probe;
      store_task_samples(probe, tasks[t - 1]);
      const double now =
          agem_memory_gradient(net, &lin, Regime::linearized, w_final, probe, t).norm();
      const double at_init =
          agem_memory_gradient(net, &lin, Regime::linearized, run.initial_weights, probe, t)
              .norm();
      worst = std::max(worst, now / std::max(1e-300, at_init));
    }
    return worst;
  };

  const double projected = memory_gradient_ratio(Algorithm::ogd);
  report.checks.push_back(detail::check("proposition1/projected_memory_gradient_vanishes",
                                        projected, 1e-8,
                                        "norm relative to the gradient at initialization", tol));

  const double unprojected = memory_gradient_ratio(Algorithm::sgd);
  report.checks.push_back(detail::check(
      "proposition1/unprojected_contrast_stays_large", std::max(0.0, 1e-3 - unprojected), 0.0,
      "contrast gradient ratio " + format_double(unprojected) + " must exceed 0.001", tol));
  return report;
}

/** Closed-form loss bounds, bound-case structure, and plug-in identities. */
inline SuiteReport suite_bounds(double tol) {
  SuiteReport report{"bounds", {}};
  Mlp net{{5, 40, 2}, Activation::relu, true};

  // the per-task train-loss terms of the bound cover the end-of-sequence
  // losses on the pinned instance family, projected and unprojected alike
  {
    const auto family = detail::bounds_instances();
    for (std::size_t i = 0; i < family.size(); ++i) {
      const detail::InstanceSpec& s = family[i];
      const auto tasks = detail::stream(s.rotated, s.dseed, s.n, s.d, s.c, s.T, 15.0);
      const Mlp fam_net = detail::net_of(s);
      const WeightVector w0 = init_weights(fam_net, derive_seed(s.wseed, 0));
      LinearizedModel lin = linearize(fam_net, w0, tasks.front());
      for (bool projected : {false, true}) {
        ContinualSolution sol = solve_stream(lin, tasks, s.ridge, projected, kFullMemory);
        const double excess = detail::train_loss_bound_excess(sol, projected);
        std::ostringstream detail_ss;
        detail_ss << (projected ? "projected" : "unprojected") << " ridge=" << s.ridge
                  << " T=" << s.T << " margin=" << format_double(-excess);
        report.checks.push_back(detail::check(
            "bounds/train_loss_within_bound_terms_" +
                std::to_string(i + 1) + (projected ? "_projected" : "_unprojected"),
            std::max(0.0, excess), 1e-8, detail_ss.str(), tol));
      }
    }
  }

  // solved final losses never exceed the bound's empirical loss term
  for (double ridge : {0.0, 1.0}) {
    const auto tasks = detail::stream(true, 31, 15, 5, 2, 3, 25.0);
    const WeightVector w0 = init_weights(net, derive_seed(31, 1));
    LinearizedModel lin = linearize(net, w0, tasks.front());
    ContinualSolution sol = solve_stream(lin, tasks, ridge, true, kFullMemory);
    double worst = -1e300;
    for (int t = 1; t <= 3; ++t) {
      BoundEntry entry = generalisation_bound(sol, Algorithm::ogd, t, 0.1, 1.0);
      worst = std::max(worst, final_train_loss(sol, t) - entry.empirical_loss_term);
    }
    report.checks.push_back(
        detail::check("bounds/train_loss_under_empirical_term_ridge_" + format_double(ridge),
                      std::max(0.0, worst), 1e-8, "projected, full memory, 3 tasks", tol));
  }

  // two-task interpolating case: the first task's residual energy equals the
  // interference term exactly
  {
    const auto tasks = detail::stream(true, 41, 15, 5, 2, 2, 35.0);
    const WeightVector w0 = init_weights(net, derive_seed(41, 1));
    LinearizedModel lin = linearize(net, w0, tasks.front());
    ContinualSolution sol = solve_stream(lin, tasks, 0.0, false);
    const double lhs = sol.tasks[0].n() * final_train_loss(sol, 1);
    const double rhs = forgetting_term(sol, 2, 1);
    report.checks.push_back(detail::check("bounds/residual_energy_equals_interference",
                                          std::abs(lhs - rhs) / std::max(1.0, rhs), 1e-8,
                                          "unprojected, ridge=0, T=2, relative", tol));
  }

  // bound-case structure: the only term separating the algorithms is the
  // scaled interference sum, and it is nonnegative
  {
    const auto tasks = detail::stream(true, 23, 20, 5, 2, 3, 30.0);
    const WeightVector w0 = init_weights(net, derive_seed(23, 1));
    LinearizedModel lin = linearize(net, w0, tasks.front());
    ContinualSolution sol = solve_stream(lin, tasks, 0.2, false);
    const int n_last = sol.tasks.back().n();
    double structure = 0.0, negativity = 0.0;
    for (int t = 1; t < 3; ++t) {
      const double gap = generalisation_bound(sol, Algorithm::sgd, t, 0.05, 2.0).total_bound -
                         generalisation_bound(sol, Algorithm::ogd, t, 0.05, 2.0).total_bound;
      double h_sum = 0.0;
      for (int k = t + 1; k <= 3; ++k) h_sum += forgetting_term(sol, k, t);
      structure = std::max(structure, std::abs(gap - h_sum / n_last));
      negativity = std::max(negativity, -gap);
    }
    report.checks.push_back(detail::check("bounds/algorithm_gap_is_scaled_interference",
                                          structure, 1e-10, "worst |gap - sum/n_T| over tasks",
                                          tol));
    report.checks.push_back(detail::check("bounds/projected_bound_never_larger",
                                          std::max(0.0, negativity), 0.0,
                                          "unprojected minus projected stays >= 0", tol));
  }

  // single-sample plug-in: complexity sqrt(trace/n^2 * dissimilarity)
  {
    Mlp tiny{{1, 1}, Activation::identity, false};
    TaskDataset one;
    one.task_id = 1;
    one.inputs = Eigen::MatrixXd::Constant(1, 1, 1.0);
    one.targets = Eigen::MatrixXd::Constant(1, 1, 2.0);
    one.gtl = {0};
    one.train_idx = {0};
    LinearizedModel lin = linearize(tiny, WeightVector::Zero(1), one);
    ContinualSolution sol{lin, {}};
    sol.tasks.push_back(solve_task(sol, one, 1.0, FeatureMapKind::raw()));
    report.checks.push_back(detail::check("bounds/complexity_plug_in_matches",
                                          std::abs(rademacher_bound(sol) - std::sqrt(2.0)),
                                          1e-12, "unit kernel, ridge 1, residual 2 -> sqrt(2)",
                                          tol));
  }

  // curriculum ordering: alternation between dissimilar tasks costs more
  {
    Mlp wide{{6, 40, 2}, Activation::relu, true};
    const WeightVector w0 = init_weights(wide, derive_seed(7, 0));
    TaskDataset A = generate_base(7, 30, 6, 2);
    TaskDataset B = rotate_task(A, 40.0);
    auto with_ids = [](std::vector<TaskDataset> ts) {
      for (std::size_t i = 0; i < ts.size(); ++i) ts[i].task_id = static_cast<int>(i) + 1;
      return ts;
    };
    LinearizedModel lin = linearize(wide, w0, A);
    const double blocked = rademacher_bound(solve_stream(lin, with_ids({A, A, B, B}), 0.1, false));
    const double alternating =
        rademacher_bound(solve_stream(lin, with_ids({A, B, A, B}), 0.1, false));
    report.checks.push_back(detail::check("bounds/alternating_order_costs_more",
                                          std::max(0.0, blocked - alternating), 0.0,
                                          "blocked " + format_double(blocked) + " vs alternating " +
                                              format_double(alternating),
                                          tol));
  }

  // the confidence term shrinks as the failure probability budget grows
  {
    double worst = 0.0, prev = confidence_term(0.01, 1.0, 50);
    for (double delta : {0.05, 0.2, 0.5, 0.9, 0.999}) {
      const double cur = confidence_term(delta, 1.0, 50);
      worst = std::max(worst, cur - prev);
      prev = cur;
    }
    report.checks.push_back(detail::check("bounds/confidence_shrinks_with_delta",
                                          std::max(0.0, worst), 0.0,
                                          "monotone over five probability levels", tol));
  }
  return report;
}

inline SuiteReport run_suite(const std::string& name, double tol_override = -1.0) {
  if (name == "theorem1") return suite_theorem1(tol_override);
  if (name == "theorem2") return suite_theorem2(tol_override);
  if (name == "corollary1") return suite_corollary1(tol_override);
  if (name == "lemma7") return suite_lemma7(tol_override);
  if (name == "proposition1") return suite_proposition1(tol_override);
  if (name == "bounds") return suite_bounds(tol_override);
  throw ConfigError("verify: unknown suite '" + name +
                    "' (expected theorem1, theorem2, corollary1, lemma7, proposition1, "
                    "bounds, or all)");
}

inline std::vector<SuiteReport> run_suites(const std::string& name, double tol_override = -1.0) {
  std::vector<SuiteReport> reports;
  if (name == "all") {
    for (const std::string& s : suite_names()) reports.push_back(run_suite(s, tol_override));
  } else {
    reports.push_back(run_suite(name, tol_override));
  }
  return reports;
}

/** Deterministic line-oriented report: one PASS/FAIL line per check. */
inline std::string format_reports(const std::vector<SuiteReport>& reports) {
  std::string out;
  int total = 0, ok = 0;
  for (const SuiteReport& r : reports) {
    for (const CheckResult& c : r.checks) {
      out += (c.pass ? "PASS " : "FAIL ") + c.name + " measured=" + format_double(c.measured) +
             " tol=" + format_double(c.tolerance);
      if (!c.detail.empty()) out += " (" + c.detail + ")";
      out += "\n";
    }
    out += "suite " + r.suite + ": " + std::to_string(r.passed()) + "/" +
           std::to_string(r.checks.size()) + " passed\n";
    total += static_cast<int>(r.checks.size());
    ok += r.passed();
  }
  if (reports.size() > 1) {
    out += "overall: " + std::to_string(ok) + "/" + std::to_string(total) + " passed\n";
  }
  return out;
}

}  // namespace tangentlab::verify
