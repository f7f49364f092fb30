#pragma once

// Closed-form continual regression in the tangent-feature space: each task
// contributes a kernel ridge increment fitted to the residual the carried
// model leaves on that task, and prediction sums the increments. Features
// are either the raw tangent features or their projection orthogonal to the
// accumulated gradient memory; each solved task snapshots the projection
// state it was solved under, so later memory growth never rewrites history.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tangentlab/errors.hpp"
#include "tangentlab/mlp.hpp"
#include "tangentlab/projection.hpp"

namespace tangentlab {

/**
 * Which feature map a task is solved with: the raw tangent features, or the
 * component orthogonal to a stored basis (held here as an owned snapshot —
 * the live basis keeps growing, this one must not).
 */
struct FeatureMapKind {
  enum class Kind { sgd, ogd };
  Kind kind = Kind::sgd;
  Eigen::MatrixXd basis;  // p x M snapshot; empty for the raw map

  static FeatureMapKind raw() { return FeatureMapKind{Kind::sgd, Eigen::MatrixXd()}; }
  static FeatureMapKind projected(const OrthonormalBasis& b) {
    return FeatureMapKind{Kind::ogd, Eigen::MatrixXd(b.matrix())};
  }
  bool projects() const { return kind == Kind::ogd && basis.cols() > 0; }
};

/** Applies the kind's projection to feature columns in place. */
inline void apply_feature_kind(const FeatureMapKind& kind, Eigen::MatrixXd& features) {
  if (!kind.projects()) return;
  features.noalias() -= kind.basis * (kind.basis.transpose() * features);
}

/** Feature matrix (p x n) for dataset rows under the given feature map. */
inline Eigen::MatrixXd feature_matrix(const FeatureMapKind& kind, const LinearizedModel& lin,
                                      const Eigen::MatrixXd& X_rows,
                                      const std::vector<int>& logits) {
  Eigen::MatrixXd F = lin.feature_matrix(X_rows, logits);
  apply_feature_kind(kind, F);
  return F;
}

/** Cross-kernel matrix: entry (i,j) = <phi~(a_i), phi~(b_j)>. */
inline Eigen::MatrixXd gram(const FeatureMapKind& kind, const LinearizedModel& lin,
                            const Eigen::MatrixXd& A_rows, const std::vector<int>& logits_a,
                            const Eigen::MatrixXd& B_rows, const std::vector<int>& logits_b) {
  Eigen::MatrixXd FA = feature_matrix(kind, lin, A_rows, logits_a);
  Eigen::MatrixXd FB = feature_matrix(kind, lin, B_rows, logits_b);
  return FA.transpose() * FB;
}

/** Exactly symmetric kernel matrix of feature columns: F^T F via rank update. */
inline Eigen::MatrixXd gram_sym(const Eigen::MatrixXd& features) {
  const int n = static_cast<int>(features.cols());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  K.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose());
  K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
  return K;
}

/**
 * One solved task of the recursion: the residual the carried model left on
 * it, the dual coefficients fitted to that residual, and everything needed
 * to re-check the solve or evaluate this increment elsewhere.
 */
struct TaskSolution {
  int task_id = 0;                     // 1-based position in the sequence
  Eigen::VectorXd residual;            // targets minus carried-over predictions
  Eigen::VectorXd dual_coefficients;   // (gram + ridge I)^{-1} residual
  Eigen::MatrixXd training_inputs;     // the task's training rows
  std::vector<int> training_gtl;
  Eigen::VectorXd training_targets;    // target value at each sample's gtl
  FeatureMapKind feature_kind;
  double ridge = 0.0;
  Eigen::MatrixXd gram;                // kernel on training inputs, unjittered
  double jitter_used = 0.0;
  Eigen::MatrixXd features;            // p x n projected feature columns (derived cache)

  int n() const { return static_cast<int>(residual.size()); }

  /** The weight displacement this increment contributes: features * alpha. */
  WeightVector weight_update() const { return features * dual_coefficients; }
};

/** The whole solved sequence plus the shared linearization anchor. */
struct ContinualSolution {
  LinearizedModel anchor;
  std::vector<TaskSolution> tasks;

  int task_count() const { return static_cast<int>(tasks.size()); }
};

/** Carried-over predictions of the solved-so-far model on query rows. */
inline Eigen::VectorXd predict_recursive_batch(const ContinualSolution& sol,
                                               const Eigen::MatrixXd& X_rows,
                                               const std::vector<int>& logits) {
  const int m = static_cast<int>(X_rows.rows());
  if (static_cast<int>(logits.size()) != m) {
    throw DimensionError("predict_recursive: one logit index per query row required");
  }
  Eigen::VectorXd out(m);
  for (int i = 0; i < m; ++i) {
    out[i] = sol.anchor.anchor_output(X_rows.row(i).transpose(), logits[i]);
  }
  if (sol.tasks.empty()) return out;
  // raw query features suffice: stored task features are already projected,
  // and the projector is idempotent and symmetric
  Eigen::MatrixXd Q = sol.anchor.feature_matrix(X_rows, logits);
  for (const TaskSolution& ts : sol.tasks) {
    out.noalias() += Q.transpose() * (ts.features * ts.dual_coefficients);
  }
  return out;
}

/** Prediction of the solved sequence at one input (selected logit). */
inline double predict_recursive(const ContinualSolution& sol, const Eigen::VectorXd& x,
                                int logit) {
  Eigen::MatrixXd row = x.transpose();
  return predict_recursive_batch(sol, row, {logit})[0];
}

namespace detail {

// Ridge system solve with diagonal jitter escalation. The returned alpha is
// accepted only if it satisfies the *unjittered* system to 1e-8 relative
// residual, so jitter can rescue a borderline factorization but can never
// smuggle in a wrong solution.
inline std::pair<Eigen::VectorXd, double> solve_with_jitter(const Eigen::MatrixXd& K,
                                                            double ridge,
                                                            const Eigen::VectorXd& rhs) {
  const int n = static_cast<int>(K.rows());
  const double rhs_norm = rhs.norm();
  for (double jitter : {0.0, 1e-12, 1e-10, 1e-8}) {
    Eigen::MatrixXd system = K;
    system.diagonal().array() += ridge + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) continue;
    Eigen::VectorXd alpha = llt.solve(rhs);
    if (!alpha.allFinite()) continue;
    Eigen::VectorXd check = K * alpha;
    check.noalias() += ridge * alpha;
    if ((check - rhs).norm() <= 1e-8 * rhs_norm) return {std::move(alpha), jitter};
  }
  (void)n;
  throw SingularKernelError(
      "solve_task: kernel system is numerically singular even with diagonal jitter; "
      "use ridge > 0");
}

}  // namespace detail

/**
 * Solves the next task against the carried model: computes the residual the
 * current solution leaves on the task's training targets, fits dual
 * coefficients through a symmetric positive-definite solve, and returns the
 * increment. The previous solution is not modified; append the result to
 * chain.
 */
inline TaskSolution solve_task(const ContinualSolution& prev, const TaskDataset& task,
                               double ridge, const FeatureMapKind& kind) {
  if (ridge < 0.0) throw DimensionError("solve_task: ridge must be >= 0");
  if (task.train_count() == 0) throw DimensionError("solve_task: task has no training samples");

  TaskSolution ts;
  ts.task_id = prev.task_count() + 1;
  ts.training_inputs = task.rows(task.train_idx);
  ts.training_gtl = task.gtl_of(task.train_idx);
  ts.training_targets = task.gtl_targets_of(task.train_idx);
  ts.feature_kind = kind;
  ts.ridge = ridge;

  const Eigen::VectorXd carried =
      predict_recursive_batch(prev, ts.training_inputs, ts.training_gtl);
  ts.residual = ts.training_targets - carried;
  ts.features = feature_matrix(kind, prev.anchor, ts.training_inputs, ts.training_gtl);
  ts.gram = gram_sym(ts.features);
  auto [alpha, jitter] = detail::solve_with_jitter(ts.gram, ridge, ts.residual);
  ts.dual_coefficients = std::move(alpha);
  ts.jitter_used = jitter;
  return ts;
}

/**
 * Solves an entire task stream in closed form. When `project` is set, each
 * task is solved with features orthogonal to the accumulated basis, and
 * afterwards contributes the tangent features of its first
 * min(memory_cap, train size) training samples to that basis — mirroring the
 * iterative trainer's end-of-task memory update.
 */
inline ContinualSolution solve_stream(const LinearizedModel& anchor,
                                      const std::vector<TaskDataset>& tasks, double ridge,
                                      bool project,
                                      int memory_cap = std::numeric_limits<int>::max()) {
  if (memory_cap < 1) throw DimensionError("solve_stream: memory_cap must be >= 1");
  ContinualSolution sol{anchor, {}};
  OrthonormalBasis basis;
  for (const TaskDataset& task : tasks) {
    const FeatureMapKind kind =
        project ? FeatureMapKind::projected(basis) : FeatureMapKind::raw();
    sol.tasks.push_back(solve_task(sol, task, ridge, kind));
    if (project) {
      const int take = std::min<int>(memory_cap, task.train_count());
      for (int k = 0; k < take; ++k) {
        const int i = task.train_idx[k];
        basis.insert(anchor.feature(task.input(i), task.gtl[i]));
      }
    }
  }
  return sol;
}

/**
 * Squared norm of the weight displacement the task's increment causes,
 * evaluated in closed form as the kernel quadratic form alpha^T gram alpha.
 */
inline double weight_distance_sq(const TaskSolution& ts) {
  const double v = ts.dual_coefficients.dot(ts.gram * ts.dual_coefficients);
  return v < 0.0 ? 0.0 : v;
}

/** One discrete step of the training-output dynamics: u - eta K (u - target). */
inline Eigen::VectorXd output_dynamics_step(const Eigen::VectorXd& u, const Eigen::MatrixXd& K,
                                            const Eigen::VectorXd& target, double eta) {
  if (K.rows() != K.cols() || u.size() != K.rows() || target.size() != K.rows()) {
    throw DimensionError("output_dynamics_step: inconsistent shapes");
  }
  if (eta <= 0.0) throw DimensionError("output_dynamics_step: eta must be > 0");
  return u - eta * (K * (u - target));
}

/** Largest step size with a convergence guarantee: 1 / ||K + ridge I||_2. */
inline double max_stable_lr(const Eigen::MatrixXd& K, double ridge) {
  if (K.rows() != K.cols()) throw DimensionError("max_stable_lr: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
  const double norm = (es.eigenvalues().array() + ridge).abs().maxCoeff();
  if (norm <= 0.0) {
    throw NumericalError("max_stable_lr: zero spectral norm, any step size is stable");
  }
  return 1.0 / norm;
}

}  // namespace tangentlab
