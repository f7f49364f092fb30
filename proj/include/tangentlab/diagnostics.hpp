#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tangentlab/errors.hpp"
#include "tangentlab/kernel.hpp"
#include "tangentlab/trainer.hpp"

namespace tangentlab {

/**
 * Dissimilarity of a solved task from everything learned before it: the
 * carried-residual energy through the regularized kernel,
 * residual' (gram + ridge I)^{-1} residual. Zero when the previous model
 * already fits the task; grows with genuine novelty.
 */
inline double ntk_dissimilarity(const TaskSolution& ts) {
  const double value = ts.residual.dot(ts.dual_coefficients);
  return std::max(value, 0.0);
}

/**
 * Capacity term of the sequential generalisation bound: for each solved task,
 * sqrt(trace(gram)/n^2 * dissimilarity), summed over the sequence. Uses the
 * stored unjittered gram matrices.
 */
inline double rademacher_bound(const ContinualSolution& sol) {
  double total = 0.0;
  for (const TaskSolution& ts : sol.tasks) {
    const double n = static_cast<double>(ts.n());
    const double term = ts.gram.trace() / (n * n) * ntk_dissimilarity(ts);
    total += std::sqrt(std::max(term, 0.0));
  }
  return total;
}

/**
 * Interference energy that later task k (1-based) exerts on the training
 * points of earlier task tau: the squared norm of the cross-kernel applied to
 * task k's dual coefficients. Cross-kernel features use task k's stored
 * feature map; because the stored feature columns are already projected when
 * the solve projected, raw features of the earlier task's inputs give the
 * identical product.
 */
inline double forgetting_term(const ContinualSolution& sol, int k, int tau) {
  const int T = sol.task_count();
  if (tau < 1 || k <= tau || k > T) {
    throw DimensionError("forgetting_term: need 1 <= tau < k <= " + std::to_string(T));
  }
  const TaskSolution& later = sol.tasks[k - 1];
  const TaskSolution& earlier = sol.tasks[tau - 1];
  Eigen::MatrixXd F_tau =
      sol.anchor.feature_matrix(earlier.training_inputs, earlier.training_gtl);
  // cross-gram rows: earlier task's samples against task k's stored features
  Eigen::VectorXd pulled = F_tau.transpose() * (later.features * later.dual_coefficients);
  return pulled.squaredNorm();
}

/** One task's slice of the sequential generalisation bound. */
struct BoundEntry {
  int task_id = 0;
  double empirical_loss_term = 0.0;       // ridge^2/n * dissimilarity
  std::vector<double> forgetting_terms;   // interference from each later task (unprojected case)
  double forgetting_sum_scaled = 0.0;     // (1/n_last) * sum of forgetting_terms
  double rademacher_total = 0.0;
  double confidence_term = 0.0;
  double total_bound = 0.0;
};

/** Deviation term of the bound: 3c sqrt(log(2/delta) / (2 n_last)). */
inline double confidence_term(double delta, double lipschitz_c, int n_last) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("confidence_term: delta must lie strictly between 0 and 1");
  }
  if (!(lipschitz_c > 0.0)) throw ConfigError("confidence_term: c must be positive");
  if (n_last <= 0) throw DimensionError("confidence_term: n_last must be positive");
  return 3.0 * lipschitz_c * std::sqrt(std::log(2.0 / delta) / (2.0 * n_last));
}

/**
 * Population bound on task tau's loss after the whole sequence, assembled for
 * the given algorithm on the same solved sequence. Projected training drops
 * the later-task interference sum; unprojected training pays it for every
 * tau before the final task.
 */
inline BoundEntry generalisation_bound(const ContinualSolution& sol, Algorithm algorithm,
                                       int tau, double delta, double lipschitz_c) {
  const int T = sol.task_count();
  if (tau < 1 || tau > T) {
    throw DimensionError("generalisation_bound: task index out of range");
  }
  const TaskSolution& ts = sol.tasks[tau - 1];
  const int n_last = sol.tasks.back().n();
  BoundEntry entry;
  entry.task_id = ts.task_id;
  entry.empirical_loss_term =
      ts.ridge * ts.ridge / static_cast<double>(ts.n()) * ntk_dissimilarity(ts);
  if (algorithm == Algorithm::sgd && tau < T) {
    for (int k = tau + 1; k <= T; ++k) {
      entry.forgetting_terms.push_back(forgetting_term(sol, k, tau));
    }
    double sum = 0.0;
    for (double h : entry.forgetting_terms) sum += h;
    entry.forgetting_sum_scaled = sum / static_cast<double>(n_last);
  }
  entry.rademacher_total = rademacher_bound(sol);
  entry.confidence_term = confidence_term(delta, lipschitz_c, n_last);
  entry.total_bound = entry.empirical_loss_term + entry.forgetting_sum_scaled +
                      entry.rademacher_total + entry.confidence_term;
  return entry;
}

/** Bound entries for every task of the sequence plus the shared terms. */
struct BoundReport {
  std::vector<BoundEntry> per_task;
  double rademacher_total = 0.0;
  double confidence_term = 0.0;
  double delta = 0.0;
  double lipschitz_c = 0.0;
  double ridge = 0.0;
};

inline BoundReport bound_report(const ContinualSolution& sol, Algorithm algorithm,
                                double delta, double lipschitz_c) {
  if (sol.tasks.empty()) throw DimensionError("bound_report: empty solution");
  BoundReport report;
  report.delta = delta;
  report.lipschitz_c = lipschitz_c;
  report.ridge = sol.tasks.front().ridge;
  for (int tau = 1; tau <= sol.task_count(); ++tau) {
    report.per_task.push_back(generalisation_bound(sol, algorithm, tau, delta, lipschitz_c));
  }
  report.rademacher_total = report.per_task.front().rademacher_total;
  report.confidence_term = report.per_task.front().confidence_term;
  return report;
}

/**
 * Mean training loss of the final chained model on task tau's training split:
 * (1/n) |final predictions - targets|^2. The quantity the empirical_loss_term
 * upper-bounds for projected training.
 */
inline double final_train_loss(const ContinualSolution& sol, int tau) {
  const int T = sol.task_count();
  if (tau < 1 || tau > T) throw DimensionError("final_train_loss: task index out of range");
  const TaskSolution& ts = sol.tasks[tau - 1];
  Eigen::VectorXd preds =
      predict_recursive_batch(sol, ts.training_inputs, ts.training_gtl);
  return (preds - ts.training_targets).squaredNorm() / static_cast<double>(ts.n());
}

/** Continual-learning scoreboard over a full accuracy history. */
struct MetricsReport {
  double acc = 0.0;                   // mean final accuracy over tasks
  std::optional<double> bwt;          // backward transfer (absent at T=1)
  std::optional<double> fwt;          // forward transfer vs baseline (absent at T=1)
  std::optional<double> afm;          // average maximum forgetting (absent at T=1)
  Eigen::VectorXd baseline_accuracies;
};

/**
 * Computes the scoreboard from the T x T accuracy history (entry (t, tau),
 * 0-based, is the accuracy on task tau+1 after training task t+1) and the
 * per-task accuracies of the untrained model. Reads the lower triangle plus
 * the superdiagonal (needed by forward transfer).
 */
inline MetricsReport metrics(const Eigen::MatrixXd& accuracy_matrix,
                             const Eigen::VectorXd& baseline) {
  const int T = static_cast<int>(accuracy_matrix.rows());
  if (accuracy_matrix.cols() != T || T == 0) {
    throw DimensionError("metrics: accuracy matrix must be square and nonempty");
  }
  if (baseline.size() != T) {
    throw DimensionError("metrics: baseline length must match the task count");
  }
  MetricsReport report;
  report.baseline_accuracies = baseline;
  report.acc = accuracy_matrix.row(T - 1).sum() / T;
  if (T == 1) return report;

  double bwt = 0.0, fwt = 0.0, afm = 0.0;
  for (int tau = 0; tau + 1 < T; ++tau) {
    bwt += accuracy_matrix(T - 1, tau) - accuracy_matrix(tau, tau);
    double peak = accuracy_matrix(tau, tau);
    for (int t = tau; t + 1 < T; ++t) peak = std::max(peak, accuracy_matrix(t, tau));
    afm += peak - accuracy_matrix(T - 1, tau);
  }
  for (int tau = 1; tau < T; ++tau) {
    fwt += accuracy_matrix(tau - 1, tau) - baseline[tau];
  }
  report.bwt = bwt / (T - 1);
  report.fwt = fwt / (T - 1);
  report.afm = afm / (T - 1);
  return report;
}

/** Scoreboard straight from a continual run (baseline row plus trained rows). */
inline MetricsReport metrics(const ContinualRunResult& run) {
  const int T = static_cast<int>(run.accuracy_matrix.cols());
  return metrics(run.accuracy_matrix.bottomRows(T), run.accuracy_matrix.row(0).transpose());
}

/** Parameters per average task size: the overparameterization ratio. */
inline double overparameterization(int param_count, const std::vector<int>& task_sizes) {
  if (task_sizes.empty()) throw DimensionError("overparameterization: no task sizes");
  double mean = 0.0;
  for (int n : task_sizes) {
    if (n <= 0) throw DimensionError("overparameterization: task sizes must be positive");
    mean += n;
  }
  mean /= static_cast<double>(task_sizes.size());
  return static_cast<double>(param_count) / mean;
}

}  // namespace tangentlab
