#pragma once

// Iterative continual training: per-task (projected) gradient descent on the
// ridge-anchored squared loss, either on the true network or on its tangent
// model, with the end-of-task memory bookkeeping each algorithm requires.
//
// Per-task loss at weights w, starting the task from w_prev:
//   L(w) = 1/2 sum_i (f(x_i) - y_i)^2 + ridge/2 * ||w - w_prev||^2
// so the full-batch gradient is sum_i r_i phi_i + ridge (w - w_prev) and the
// stable-step threshold is 1 / ||K + ridge I||.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tangentlab/errors.hpp"
#include "tangentlab/kernel.hpp"
#include "tangentlab/mlp.hpp"
#include "tangentlab/projection.hpp"
#include "tangentlab/rng.hpp"
#include "tangentlab/tasks.hpp"

namespace tangentlab {

enum class Algorithm { sgd, ogd, ogd_plus };
enum class Regime { linearized, nonlinear };

constexpr int kFullMemory = std::numeric_limits<int>::max();
constexpr double kDivergenceThreshold = 1e12;

struct TrainConfig {
  Algorithm algorithm = Algorithm::sgd;
  double learning_rate = 1e-2;
  bool learning_rate_auto = false;  // per task: auto_lr_factor / ||K + ridge I||
  double auto_lr_factor = 0.9;
  double ridge = 0.0;
  long steps_per_task = 1000;
  double convergence_tolerance = 0.0;  // sup norm of the applied update direction; 0 = off
  int batch_size = 0;                  // 0 = full batch
  Regime regime = Regime::linearized;
  std::uint64_t seed = 0;
  int memory_cap_per_task = 100;       // kFullMemory = keep every training sample
  bool enforce_stable_lr = false;

  bool projects() const { return algorithm != Algorithm::sgd; }

  /** Every invalid field as (field, problem); empty means the config is sound. */
  std::vector<std::pair<std::string, std::string>> issues() const {
    std::vector<std::pair<std::string, std::string>> out;
    if (!learning_rate_auto && learning_rate <= 0.0) {
      out.emplace_back("learning_rate", "must be > 0");
    }
    if (learning_rate_auto && (auto_lr_factor <= 0.0 || auto_lr_factor >= 1.0)) {
      out.emplace_back("auto_lr_factor", "must be in (0, 1)");
    }
    if (ridge < 0.0) out.emplace_back("ridge", "must be >= 0");
    if (steps_per_task < 0) out.emplace_back("steps_per_task", "must be >= 0");
    if (convergence_tolerance < 0.0) {
      out.emplace_back("convergence_tolerance", "must be >= 0");
    }
    if (batch_size < 0) out.emplace_back("batch_size", "must be >= 0");
    if (memory_cap_per_task < 1) out.emplace_back("memory_cap", "must be >= 1");
    if (regime == Regime::linearized && batch_size != 0) {
      out.emplace_back("batch_size",
                       "mini-batches are a nonlinear-regime feature; the linearized "
                       "trainer is full-batch by definition");
    }
    return out;
  }

  void validate() const {
    const auto list = issues();
    if (!list.empty()) {
      throw ConfigError("train config: " + list.front().first + " " + list.front().second);
    }
  }
};

/** Per-task outcome details, for callers that want more than the weights. */
struct TrainStats {
  long steps_taken = 0;
  double eta_used = 0.0;
  double final_loss = 0.0;  // mean squared error over the task's training split
  bool converged = false;   // stopped by the tolerance rather than the step cap
};

/** Model output at a sample's ground-truth logit under the chosen regime. */
inline double predict_value(const Mlp& net, const LinearizedModel* lin, Regime regime,
                            const WeightVector& w, const Eigen::VectorXd& x, int gtl) {
  if (regime == Regime::linearized) {
    if (!lin) throw ConfigError("linearized prediction requires the tangent model");
    return linear_predict(*lin, w, x, gtl);
  }
  return forward(net, w, x)(gtl);
}

namespace detail {

// Tangent kernel of the task's training samples at the given weights; its
// spectral norm sets the stable step size. In the linearized regime the
// projected kernel gives the exact threshold for projected descent, because
// the iterates never leave the anchor tangent space. In the nonlinear regime
// the kernel itself moves with the weights, so we keep the unprojected
// kernel's (never smaller) norm: projection only shrinks the Gram matrix, so
// the resulting rate is still below the projected threshold, without betting
// the step size on a near-annihilated subspace staying flat.
inline double stable_lr_for_task(const Mlp& net, const LinearizedModel* lin,
                                 const TrainConfig& cfg, const WeightVector& w,
                                 const TaskDataset& task, const OrthonormalBasis* basis) {
  Eigen::MatrixXd F;
  const Eigen::MatrixXd X = task.rows(task.train_idx);
  const std::vector<int> gtls = task.gtl_of(task.train_idx);
  if (cfg.regime == Regime::linearized) {
    F = lin->feature_matrix(X, gtls);
  } else {
    F.resize(net.param_count(), X.rows());
    for (int i = 0; i < X.rows(); ++i) {
      F.col(i) = jacobian(net, w, X.row(i).transpose(), gtls[i]);
    }
  }
  if (cfg.regime == Regime::linearized && cfg.projects() && basis && !basis->empty()) {
    F.noalias() -= basis->matrix() * (basis->matrix().transpose() * F);
  }
  return max_stable_lr(gram_sym(F), cfg.ridge);
}

inline void check_divergence(double loss, long step, int task_id) {
  if (!std::isfinite(loss) || loss > kDivergenceThreshold) {
    throw DivergenceError("training diverged on task " + std::to_string(task_id) +
                              " (loss " + std::to_string(loss) + ")",
                          static_cast<int>(step));
  }
}

}  // namespace detail

/**
 * Trains one task from w_start: gradient descent on the ridge-anchored
 * squared loss, every update projected orthogonally to the stored basis when
 * the algorithm projects. Returns the final weights. Stops early when the
 * applied update direction's sup norm falls below convergence_tolerance.
 */
inline WeightVector train_task(const Mlp& net, const WeightVector& w_start,
                               const TaskDataset& task, const OrthonormalBasis* basis,
                               const TrainConfig& cfg, const LinearizedModel* lin = nullptr,
                               TrainStats* stats = nullptr) {
  cfg.validate();
  if (task.train_count() == 0) throw DimensionError("train_task: task has no training samples");
  if (cfg.regime == Regime::linearized && !lin) {
    throw ConfigError("train_task: linearized regime requires the tangent model");
  }
  const bool project = cfg.projects() && basis && !basis->empty();
  const int n = task.train_count();

  double eta = cfg.learning_rate;
  if (cfg.learning_rate_auto || cfg.enforce_stable_lr) {
    const double bound = detail::stable_lr_for_task(net, lin, cfg, w_start, task, basis);
    if (cfg.learning_rate_auto) {
      eta = cfg.auto_lr_factor * bound;
    } else if (eta >= bound) {
      if (cfg.enforce_stable_lr) {
        throw ConfigError("train_task: learning rate " + std::to_string(eta) +
                          " is at or above the stable threshold " + std::to_string(bound));
      }
    }
  }

  WeightVector w = w_start;
  TrainStats local;
  local.eta_used = eta;
  const Eigen::MatrixXd X = task.rows(task.train_idx);
  const std::vector<int> gtls = task.gtl_of(task.train_idx);
  const Eigen::VectorXd y = task.gtl_targets_of(task.train_idx);

  if (cfg.regime == Regime::linearized) {
    // tangent fast path: features are constant, so materialize them once
    Eigen::MatrixXd F = lin->feature_matrix(X, gtls);
    Eigen::VectorXd f_anchor(n);
    for (int i = 0; i < n; ++i) {
      f_anchor[i] = lin->anchor_output(X.row(i).transpose(), gtls[i]);
    }
    Eigen::VectorXd r = f_anchor - y;
    r.noalias() += F.transpose() * (w - lin->anchor);
    for (long step = 0; step < cfg.steps_per_task; ++step) {
      if (step % 512 == 511) {
        // the incrementally maintained residual accumulates rounding over
        // long runs; rebuild it from the weights periodically
        r = f_anchor - y;
        r.noalias() += F.transpose() * (w - lin->anchor);
      }
      detail::check_divergence(r.squaredNorm() / n, step, task.task_id);
      WeightVector g = F * r;
      if (cfg.ridge > 0.0) g.noalias() += cfg.ridge * (w - w_start);
      if (project) g = basis->project_orthogonal(g);
      if (cfg.convergence_tolerance > 0.0 &&
          g.lpNorm<Eigen::Infinity>() <= cfg.convergence_tolerance) {
        local.converged = true;
        break;
      }
      w.noalias() -= eta * g;
      r.noalias() -= eta * (F.transpose() * g);
      ++local.steps_taken;
    }
    local.final_loss = r.squaredNorm() / n;
    detail::check_divergence(local.final_loss, local.steps_taken, task.task_id);
  } else if (cfg.batch_size == 0) {
    // full-batch on the true network
    const Eigen::MatrixXd Xt = X.transpose();  // columns = samples
    for (long step = 0; step < cfg.steps_per_task; ++step) {
      Eigen::VectorXd r(n);
      {
        Eigen::MatrixXd out = forward_batch(net, w, Xt);
        for (int i = 0; i < n; ++i) r[i] = out(gtls[i], i) - y[i];
      }
      detail::check_divergence(r.squaredNorm() / n, step, task.task_id);
      WeightVector g = accumulate_logit_gradients(net, w, Xt, gtls, r);
      if (cfg.ridge > 0.0) g.noalias() += cfg.ridge * (w - w_start);
      if (project) g = basis->project_orthogonal(g);
      if (cfg.convergence_tolerance > 0.0 &&
          g.lpNorm<Eigen::Infinity>() <= cfg.convergence_tolerance) {
        local.converged = true;
        break;
      }
      w.noalias() -= eta * g;
      ++local.steps_taken;
    }
    Eigen::MatrixXd out = forward_batch(net, w, Xt);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += (out(gtls[i], i) - y[i]) * (out(gtls[i], i) - y[i]);
    local.final_loss = sq / n;
    detail::check_divergence(local.final_loss, local.steps_taken, task.task_id);
  } else {
    // mini-batches: per-epoch reshuffle, gradient scaled to estimate the
    // full-batch sum, one step per batch
    SplitMix64 order_rng(derive_seed(cfg.seed, 0x6261746368ull + task.task_id));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    int cursor = n;  // force an initial shuffle
    const int b = std::min(cfg.batch_size, n);
    for (long step = 0; step < cfg.steps_per_task; ++step) {
      if (cursor >= n) {
        shuffle_indices(order, order_rng);
        cursor = 0;
      }
      const int take = std::min(b, n - cursor);
      Eigen::MatrixXd Xb(X.cols(), take);
      std::vector<int> gb(take);
      Eigen::VectorXd yb(take);
      for (int j = 0; j < take; ++j) {
        const int i = order[cursor + j];
        Xb.col(j) = X.row(i).transpose();
        gb[j] = gtls[i];
        yb[j] = y[i];
      }
      cursor += take;
      Eigen::VectorXd rb(take);
      {
        Eigen::MatrixXd out = forward_batch(net, w, Xb);
        for (int j = 0; j < take; ++j) rb[j] = out(gb[j], j) - yb[j];
      }
      detail::check_divergence(rb.squaredNorm() / take, step, task.task_id);
      const double scale = static_cast<double>(n) / take;
      WeightVector g = scale * accumulate_logit_gradients(net, w, Xb, gb, rb);
      if (cfg.ridge > 0.0) g.noalias() += cfg.ridge * (w - w_start);
      if (project) g = basis->project_orthogonal(g);
      if (cfg.convergence_tolerance > 0.0 &&
          g.lpNorm<Eigen::Infinity>() <= cfg.convergence_tolerance) {
        local.converged = true;
        break;
      }
      w.noalias() -= eta * g;
      ++local.steps_taken;
    }
    const Eigen::MatrixXd Xt = X.transpose();
    Eigen::MatrixXd out = forward_batch(net, w, Xt);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += (out(gtls[i], i) - y[i]) * (out(gtls[i], i) - y[i]);
    local.final_loss = sq / n;
    detail::check_divergence(local.final_loss, local.steps_taken, task.task_id);
  }

  if (stats) *stats = local;
  return w;
}

/**
 * Everything a continual run measures. Accuracy matrices have T+1 rows: row
 * 0 is the untrained network (the baseline accuracies), row t the state
 * after training task t; columns are tasks. Memorized-sample rows are
 * NaN for tasks whose memory does not exist yet (column task not trained).
 */
struct ContinualRunResult {
  Eigen::MatrixXd accuracy_matrix;     // (T+1) x T, test accuracy
  Eigen::MatrixXd memorized_accuracy;  // (T+1) x T, train accuracy on memorized samples
  Eigen::MatrixXd memorized_loss;      // (T+1) x T, mean squared error on memorized samples
  std::vector<WeightVector> weight_checkpoints;  // after each task (size T)
  WeightVector initial_weights;
  std::vector<std::pair<int, int>> memory_basis_counts;  // (task id, vectors contributed)
  GradientMemory memory;
  std::vector<TrainStats> task_stats;

  int task_count() const { return static_cast<int>(weight_checkpoints.size()); }

  Eigen::VectorXd baseline_accuracies() const { return accuracy_matrix.row(0).transpose(); }

  /** The T x T block of rows "after task t". */
  Eigen::MatrixXd trained_accuracy_block() const {
    return accuracy_matrix.bottomRows(accuracy_matrix.rows() - 1);
  }
};

namespace detail {

inline double accuracy_over(const Mlp& net, const LinearizedModel* lin, Regime regime,
                            const WeightVector& w, const TaskDataset& task,
                            const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  int correct = 0;
  for (int i : idx) {
    const double score = predict_value(net, lin, regime, w, task.input(i), task.gtl[i]);
    correct += (score > 0.5) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

struct MemorizedEval {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline MemorizedEval memorized_eval(const Mlp& net, const LinearizedModel* lin, Regime regime,
                                    const WeightVector& w, const SampleMemory& samples,
                                    int task_id) {
  MemorizedEval ev;
  int count = 0, correct = 0;
  double sq = 0.0;
  for (const MemorySample& m : samples.entries) {
    if (m.task_id != task_id) continue;
    const double score = predict_value(net, lin, regime, w, m.x, m.gtl);
    correct += (score > 0.5) ? 1 : 0;
    sq += (score - m.target) * (score - m.target);
    ++count;
  }
  if (count == 0) {
    ev.accuracy = std::numeric_limits<double>::quiet_NaN();
    ev.loss = std::numeric_limits<double>::quiet_NaN();
    return ev;
  }
  ev.accuracy = static_cast<double>(correct) / count;
  ev.loss = sq / count;
  return ev;
}

}  // namespace detail

/**
 * Sequential training over a task stream. Task t+1 starts from task t's
 * final weights; the gradient memory is updated at every task boundary per
 * the algorithm (projecting algorithms store end-of-task gradients; the
 * refresh variant additionally rebuilds all stored gradients at the current
 * weights before each new task). Every boundary also records full accuracy
 * rows, so forward-transfer and baseline columns are available.
 */
inline ContinualRunResult run_continual(const Mlp& net, const std::vector<TaskDataset>& tasks,
                                        const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (tasks.empty()) throw ConfigError("run_continual: need at least one task");
  for (const TaskDataset& t : tasks) {
    if (t.dim() != net.input_dim()) {
      throw ConfigError("run_continual: task " + std::to_string(t.task_id) +
                        " input dimension " + std::to_string(t.dim()) +
                        " does not match network input " + std::to_string(net.input_dim()));
    }
    if (t.classes() > net.output_dim()) {
      throw ConfigError("run_continual: task " + std::to_string(t.task_id) + " has " +
                        std::to_string(t.classes()) + " classes but the network has " +
                        std::to_string(net.output_dim()) + " outputs");
    }
    if (t.train_count() == 0) {
      throw ConfigError("run_continual: task " + std::to_string(t.task_id) +
                        " has no training samples");
    }
  }
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    for (std::size_t b = a + 1; b < tasks.size(); ++b) {
      if (tasks[a].task_id == tasks[b].task_id) {
        throw ConfigError("run_continual: tasks " + std::to_string(a + 1) + " and " +
                          std::to_string(b + 1) + " share task id " +
                          std::to_string(tasks[a].task_id) +
                          "; memory bookkeeping needs distinct ids");
      }
    }
  }

  const int T = static_cast<int>(tasks.size());
  WeightVector w = init_weights(net, derive_seed(cfg.seed, 0));
  LinearizedModel lin = linearize(net, w, tasks.front());
  const LinearizedModel* lin_ptr = cfg.regime == Regime::linearized ? &lin : nullptr;

  ContinualRunResult result{Eigen::MatrixXd::Zero(T + 1, T),
                            Eigen::MatrixXd::Zero(T + 1, T),
                            Eigen::MatrixXd::Zero(T + 1, T),
                            {},
                            w,
                            {},
                            GradientMemory(cfg.memory_cap_per_task),
                            {}};

  auto record_row = [&](int row) {
    for (int tau = 0; tau < T; ++tau) {
      result.accuracy_matrix(row, tau) = detail::accuracy_over(
          net, lin_ptr, cfg.regime, w, tasks[tau], tasks[tau].test_idx);
      const detail::MemorizedEval ev = detail::memorized_eval(
          net, lin_ptr, cfg.regime, w, result.memory.samples, tasks[tau].task_id);
      result.memorized_accuracy(row, tau) = ev.accuracy;
      result.memorized_loss(row, tau) = ev.loss;
    }
  };
  record_row(0);

  for (int t = 0; t < T; ++t) {
    const TaskDataset& task = tasks[t];
    try {
      if (cfg.algorithm == Algorithm::ogd_plus && t > 0 && cfg.regime == Regime::nonlinear) {
        // rebuild every stored gradient at the current weights; with constant
        // tangent features (linearized regime) the rebuilt span is unchanged,
        // so the refresh is skipped there as an exact no-op
        refresh_ogdplus(result.memory, net, w);
      }
      w = train_task(net, w, task, &result.memory.basis, cfg, lin_ptr,
                     &result.task_stats.emplace_back());
      if (cfg.projects()) {
        JacobianSource source = [&](const Eigen::VectorXd& x, int gtl) {
          return cfg.regime == Regime::linearized ? lin.feature(x, gtl)
                                                  : jacobian(net, w, x, gtl);
        };
        store_task_jacobians(result.memory, source, task);
      } else {
        store_task_samples(result.memory.samples, task);
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("task " + std::to_string(task.task_id) + ": " + e.what(), e.step);
    }
    result.weight_checkpoints.push_back(w);
    record_row(t + 1);
  }
  result.memory_basis_counts = result.memory.basis_counts_per_task();
  return result;
}

/**
 * Gradient of the squared loss sum_i (f(x_i) - y_i)^2 over one task's
 * memorized samples, at weights w. For a projecting trainer in the tangent
 * regime this is the quantity that provably vanishes once the task has been
 * fitted; its norm is the replay-free forgetting indicator.
 */
inline WeightVector agem_memory_gradient(const Mlp& net, const LinearizedModel* lin,
                                         Regime regime, const WeightVector& w,
                                         const SampleMemory& samples, int task_id) {
  std::vector<const MemorySample*> mem = samples.samples_of_task(task_id);
  if (mem.empty()) {
    throw DimensionError("agem_memory_gradient: no memorized samples for task " +
                         std::to_string(task_id));
  }
  const int m = static_cast<int>(mem.size());
  Eigen::MatrixXd X(net.input_dim(), m);
  std::vector<int> gtls(m);
  Eigen::VectorXd coeffs(m);
  for (int j = 0; j < m; ++j) {
    X.col(j) = mem[j]->x;
    gtls[j] = mem[j]->gtl;
    const double score = predict_value(net, lin, regime, w, mem[j]->x, mem[j]->gtl);
    coeffs[j] = 2.0 * (score - mem[j]->target);
  }
  if (regime == Regime::linearized) {
    WeightVector g = WeightVector::Zero(net.param_count());
    for (int j = 0; j < m; ++j) g.noalias() += coeffs[j] * lin->feature(mem[j]->x, gtls[j]);
    return g;
  }
  return accumulate_logit_gradients(net, w, X, gtls, coeffs);
}

/**
 * Accuracy drift on task k's memorized samples: accuracy after the final
 * task minus accuracy at the end of task k itself. Zero means the memorized
 * samples survived later training; negative means they were forgotten.
 */
inline double forgetting_probe(const ContinualRunResult& result, int task_k) {
  const int T = result.task_count();
  if (task_k < 1 || task_k > T) {
    throw DimensionError("forgetting_probe: task index out of range");
  }
  return result.memorized_accuracy(T, task_k - 1) -
         result.memorized_accuracy(task_k, task_k - 1);
}

}  // namespace tangentlab
