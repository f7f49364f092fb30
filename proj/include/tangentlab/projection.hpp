#pragma once

// Orthonormal span of stored gradient directions and the orthogonal
// projector that keeps weight updates from disturbing them, plus the raw
// sample memory and its end-of-task / refresh bookkeeping.

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

#include "tangentlab/errors.hpp"
#include "tangentlab/mlp.hpp"

namespace tangentlab {

/**
 * Ordered orthonormal vectors in R^p, grown by modified Gram-Schmidt with
 * one reorthogonalization pass. Vectors whose residual after
 * orthogonalization falls below drop_tolerance * max(1, ||v||) are rejected
 * as numerically in-span.
 */
class OrthonormalBasis {
 public:
  explicit OrthonormalBasis(double drop_tolerance = 1e-10)
      : drop_tolerance_(drop_tolerance) {
    if (drop_tolerance_ <= 0.0) {
      throw DimensionError("OrthonormalBasis: drop_tolerance must be > 0");
    }
  }

  int count() const { return count_; }
  bool empty() const { return count_ == 0; }
  double drop_tolerance() const { return drop_tolerance_; }
  int dim() const { return static_cast<int>(vectors_.rows()); }

  /** The stored vectors as columns (p x count view). */
  Eigen::Ref<const Eigen::MatrixXd> matrix() const { return vectors_.leftCols(count_); }

  Eigen::VectorXd vector(int i) const { return vectors_.col(i); }

  void clear() { count_ = 0; }

  /**
   * Orthogonalizes v against the basis (two sequential passes) and appends
   * the normalized residual when it is numerically independent. Returns
   * whether the vector was accepted; rejection leaves the basis unchanged.
   */
  bool insert(const Eigen::VectorXd& v) {
    if (!v.allFinite()) throw NumericalError("OrthonormalBasis: non-finite input vector");
    if (count_ == 0) {
      reserve(static_cast<int>(v.size()), 1);
    } else if (v.size() != vectors_.rows()) {
      throw DimensionError("OrthonormalBasis: vector length does not match basis dimension");
    }
    if (count_ >= dim()) return false;  // span is already all of R^p

    Eigen::VectorXd r = v;
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < count_; ++j) {
        r -= vectors_.col(j).dot(r) * vectors_.col(j);
      }
    }
    const double rnorm = r.norm();
    if (rnorm <= drop_tolerance_ * std::max(1.0, v.norm())) return false;
    reserve(dim(), count_ + 1);
    vectors_.col(count_) = r / rnorm;
    ++count_;
    return true;
  }

  /**
   * The component of g orthogonal to the span: g - V (V^T g). An empty basis
   * returns g itself, bit for bit, so the projector is exactly the identity
   * until something is stored.
   */
  Eigen::VectorXd project_orthogonal(const Eigen::VectorXd& g) const {
    if (count_ == 0) return g;
    if (g.size() != vectors_.rows()) {
      throw DimensionError("project_orthogonal: vector length does not match basis dimension");
    }
    Eigen::VectorXd out = g;
    out.noalias() -= vectors_.leftCols(count_) * (vectors_.leftCols(count_).transpose() * g);
    return out;
  }

 private:
  void reserve(int rows, int cols_needed) {
    if (vectors_.rows() != rows) {
      vectors_.resize(rows, std::max(cols_needed, 8));
    } else if (vectors_.cols() < cols_needed) {
      Eigen::MatrixXd bigger(rows, std::max(cols_needed, static_cast<int>(vectors_.cols()) * 2));
      bigger.leftCols(count_) = vectors_.leftCols(count_);
      vectors_.swap(bigger);
    }
  }

  Eigen::MatrixXd vectors_;  // columns 0..count_-1 are valid
  int count_ = 0;
  double drop_tolerance_;
};

/** One remembered training sample: where it came from and what it asked for. */
struct MemorySample {
  int task_id = 0;
  int sample_index = 0;  // row in the originating dataset
  Eigen::VectorXd x;
  int gtl = 0;
  double target = 0.0;
};

/** Raw sample store with a per-task cap (the replay-free "memory"). */
struct SampleMemory {
  std::vector<MemorySample> entries;
  int per_task_cap = 100;

  int count_for_task(int task_id) const {
    int c = 0;
    for (const MemorySample& m : entries) c += (m.task_id == task_id) ? 1 : 0;
    return c;
  }
  std::vector<const MemorySample*> samples_of_task(int task_id) const {
    std::vector<const MemorySample*> out;
    for (const MemorySample& m : entries) {
      if (m.task_id == task_id) out.push_back(&m);
    }
    return out;
  }
  std::vector<int> task_ids() const {
    std::vector<int> ids;
    for (const MemorySample& m : entries) {
      if (ids.empty() || ids.back() != m.task_id) ids.push_back(m.task_id);
    }
    return ids;
  }
};

/**
 * The joint gradient memory: the orthonormal basis used for projection, the
 * raw samples it was built from, and per-vector provenance linking each
 * basis vector back to its (task, sample).
 */
struct GradientMemory {
  OrthonormalBasis basis;
  SampleMemory samples;
  std::vector<std::pair<int, int>> provenance;  // (task_id, sample_index) per basis vector

  explicit GradientMemory(int per_task_cap = 100, double drop_tolerance = 1e-10)
      : basis(drop_tolerance) {
    if (per_task_cap < 1) throw DimensionError("GradientMemory: per_task_cap must be >= 1");
    samples.per_task_cap = per_task_cap;
  }

  /** Basis vectors contributed by each task, in task order. */
  std::vector<std::pair<int, int>> basis_counts_per_task() const {
    std::vector<std::pair<int, int>> counts;
    for (const auto& [task, sample] : provenance) {
      (void)sample;
      if (counts.empty() || counts.back().first != task) counts.emplace_back(task, 0);
      counts.back().second += 1;
    }
    return counts;
  }
};

/** Produces the stored gradient direction for a sample: (x, gtl) -> R^p. */
using JacobianSource = std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)>;

/**
 * Records the first per_task_cap training samples of the task (dataset
 * order) into the sample memory without touching the basis — the memory
 * update for trainers that never project. Re-storing a task id replaces its
 * previous samples.
 */
inline void store_task_samples(SampleMemory& memory, const TaskDataset& task) {
  if (task.n() == 0) throw DimensionError("store_task_samples: task has no samples");
  auto& entries = memory.entries;
  entries.erase(std::remove_if(entries.begin(), entries.end(),
                               [&](const MemorySample& m) { return m.task_id == task.task_id; }),
                entries.end());
  const int take = std::min<int>(memory.per_task_cap, task.train_count());
  for (int k = 0; k < take; ++k) {
    const int i = task.train_idx[k];
    entries.push_back(MemorySample{task.task_id, i, task.input(i), task.gtl[i],
                                   task.gtl_target(i)});
  }
}

/**
 * End-of-task memory update: selects the first per_task_cap training samples
 * of the task in dataset order, records them in the sample memory, computes
 * each one's ground-truth-logit gradient, and inserts it into the basis
 * (rejections are normal for dependent directions). Calling it again for the
 * same task id first discards that task's previous samples.
 */
inline void store_task_jacobians(GradientMemory& mem, const JacobianSource& jac_source,
                                 const TaskDataset& task) {
  store_task_samples(mem.samples, task);
  for (const MemorySample& m : mem.samples.entries) {
    if (m.task_id != task.task_id) continue;
    if (mem.basis.insert(jac_source(m.x, m.gtl))) {
      mem.provenance.emplace_back(m.task_id, m.sample_index);
    }
  }
}

/**
 * Memory refresh at a task boundary: recomputes the gradient of every stored
 * sample at the current weights, discards the old basis entirely, and
 * rebuilds it by insertion in stored order. With weight-independent
 * gradients (a linear model) this is a no-op up to rounding; with relu
 * activation-pattern changes the rebuilt span genuinely moves.
 */
inline void refresh_ogdplus(GradientMemory& mem, const Mlp& net, const WeightVector& w) {
  mem.basis.clear();
  mem.provenance.clear();
  for (const MemorySample& m : mem.samples.entries) {
    if (mem.basis.insert(jacobian(net, w, m.x, m.gtl))) {
      mem.provenance.emplace_back(m.task_id, m.sample_index);
    }
  }
}

}  // namespace tangentlab
