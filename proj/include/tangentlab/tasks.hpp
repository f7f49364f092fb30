#pragma once

// Desk-scale benchmark tasks: Gaussian blob classification plus the three
// continual-learning constructions (coordinate permutation, in-plane
// rotation, class splits) and CSV ingestion.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tangentlab/errors.hpp"
#include "tangentlab/format.hpp"
#include "tangentlab/rng.hpp"

namespace tangentlab {

/** One supervised task: inputs, one-hot targets, and a fixed train/test split. */
struct TaskDataset {
  int task_id = 0;
  Eigen::MatrixXd inputs;    // n x d, rows are samples
  Eigen::MatrixXd targets;   // n x c one-hot (or n x 1 scalar targets)
  std::vector<int> gtl;      // ground-truth logit index per sample
  std::vector<int> train_idx;
  std::vector<int> test_idx;

  int n() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  int classes() const { return static_cast<int>(targets.cols()); }
  int train_count() const { return static_cast<int>(train_idx.size()); }
  int test_count() const { return static_cast<int>(test_idx.size()); }

  Eigen::VectorXd input(int i) const { return inputs.row(i).transpose(); }
  /** Target value of sample i at its ground-truth logit (1.0 for one-hot rows). */
  double gtl_target(int i) const { return targets(i, classes() == 1 ? 0 : gtl[i]); }

  /** Rows of `inputs` restricted to an index list. */
  Eigen::MatrixXd rows(const std::vector<int>& idx) const {
    Eigen::MatrixXd out(idx.size(), inputs.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = inputs.row(idx[i]);
    return out;
  }
  std::vector<int> gtl_of(const std::vector<int>& idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = gtl[idx[i]];
    return out;
  }
  Eigen::VectorXd gtl_targets_of(const std::vector<int>& idx) const {
    Eigen::VectorXd out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = gtl_target(idx[i]);
    return out;
  }
};

namespace detail {

// Per-class 80/20 split, first 4/5 of each class's samples (in dataset
// order) to train. Keeps both splits class-balanced and deterministic.
inline void split_80_20_per_class(TaskDataset& ds) {
  ds.train_idx.clear();
  ds.test_idx.clear();
  std::vector<std::vector<int>> by_class;
  for (int i = 0; i < ds.n(); ++i) {
    const int c = ds.gtl[i];
    if (c >= static_cast<int>(by_class.size())) by_class.resize(c + 1);
    by_class[c].push_back(i);
  }
  for (const auto& members : by_class) {
    const int tr = static_cast<int>(members.size()) * 4 / 5;
    for (int j = 0; j < static_cast<int>(members.size()); ++j) {
      (j < tr ? ds.train_idx : ds.test_idx).push_back(members[j]);
    }
  }
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.test_idx.begin(), ds.test_idx.end());
}

}  // namespace detail

/**
 * Gaussian class blobs: class means drawn uniformly on the sphere of radius
 * 3, unit-variance isotropic samples, classes balanced and interleaved in
 * dataset order (so any prefix of the data is near-balanced), 80/20
 * train/test split per class. Bit-reproducible for a given seed.
 */
inline TaskDataset generate_base(std::uint64_t seed, int n = 200, int d = 16,
                                 int classes = 2) {
  if (classes < 2) throw DimensionError("generate_base: need at least 2 classes");
  if (d < classes) throw DimensionError("generate_base: need d >= classes");
  if (n < classes) throw DimensionError("generate_base: need n >= classes");
  SplitMix64 rng(seed);

  Eigen::MatrixXd means(classes, d);
  for (int k = 0; k < classes; ++k) {
    Eigen::VectorXd m(d);
    for (int j = 0; j < d; ++j) m[j] = rng.next_gaussian();
    means.row(k) = (3.0 / m.norm()) * m.transpose();
  }

  // Class counts: n/classes each, remainder spread over the first classes.
  std::vector<int> quota(classes, n / classes);
  for (int k = 0; k < n % classes; ++k) quota[k] += 1;

  TaskDataset ds;
  ds.inputs.resize(n, d);
  ds.targets = Eigen::MatrixXd::Zero(n, classes);
  ds.gtl.resize(n);
  std::vector<int> placed(classes, 0);
  int row = 0, k = 0;
  while (row < n) {
    if (placed[k] < quota[k]) {
      for (int j = 0; j < d; ++j) ds.inputs(row, j) = means(k, j) + rng.next_gaussian();
      ds.targets(row, k) = 1.0;
      ds.gtl[row] = k;
      ++placed[k];
      ++row;
    }
    k = (k + 1) % classes;
  }
  detail::split_80_20_per_class(ds);
  return ds;
}

/** The coordinate permutation a given seed produces (seed 0 = identity). */
inline std::vector<int> permutation_for_seed(int d, std::uint64_t seed) {
  std::vector<int> perm(d);
  for (int j = 0; j < d; ++j) perm[j] = j;
  if (seed != 0) {
    SplitMix64 rng(seed);
    shuffle_indices(perm, rng);
  }
  return perm;
}

/** Reorders input coordinates: output column j takes input column perm[j]. */
inline TaskDataset apply_permutation(const TaskDataset& base, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != base.dim()) {
    throw DimensionError("permute_task: permutation length does not match input dimension");
  }
  TaskDataset out = base;
  for (int j = 0; j < base.dim(); ++j) out.inputs.col(j) = base.inputs.col(perm[j]);
  return out;
}

/** Permuted-input construction; targets and split are untouched. */
inline TaskDataset permute_task(const TaskDataset& base, std::uint64_t seed) {
  return apply_permutation(base, permutation_for_seed(base.dim(), seed));
}

namespace detail {

// Fixed 2-plane for all rotations: the first two vectors of an orthonormal
// frame drawn from a constant seed, so every angle rotates the same plane.
inline const Eigen::MatrixXd& rotation_plane(int d) {
  static thread_local int cached_d = -1;
  static thread_local Eigen::MatrixXd plane;
  if (cached_d != d) {
    constexpr std::uint64_t kFrameSeed = 0x5EEDF4A3E1Dull;
    SplitMix64 rng(kFrameSeed);
    Eigen::MatrixXd q(d, 2);
    for (int col = 0; col < 2; ++col) {
      Eigen::VectorXd v(d);
      for (int j = 0; j < d; ++j) v[j] = rng.next_gaussian();
      for (int prev = 0; prev < col; ++prev) v -= q.col(prev).dot(v) * q.col(prev);
      q.col(col) = v / v.norm();
    }
    plane = q;
    cached_d = d;
  }
  return plane;
}

}  // namespace detail

/**
 * Rotates every input by `angle_degrees` inside a fixed 2-plane of input
 * space (an isometry; the vector-space analogue of rotating an image).
 * Angle 0 returns the base exactly.
 */
inline TaskDataset rotate_task(const TaskDataset& base, double angle_degrees) {
  if (base.dim() < 2) throw DimensionError("rotate_task: need input dimension >= 2");
  const Eigen::MatrixXd& q = detail::rotation_plane(base.dim());
  const double theta = angle_degrees * 3.14159265358979323846 / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  TaskDataset out = base;
  // x' = x + (cos-1)(q1<q1,x> + q2<q2,x>) + sin(q2<q1,x> - q1<q2,x>)
  Eigen::VectorXd p1 = base.inputs * q.col(0);
  Eigen::VectorXd p2 = base.inputs * q.col(1);
  out.inputs += (c - 1.0) * (p1 * q.col(0).transpose() + p2 * q.col(1).transpose()) +
                s * (p1 * q.col(1).transpose() - p2 * q.col(0).transpose());
  return out;
}

/**
 * Restricts the dataset to a subset of classes and relabels targets into the
 * subset's local one-hot space (class subset[j] becomes local logit j).
 */
inline TaskDataset split_task(const TaskDataset& base, const std::vector<int>& class_subset) {
  if (class_subset.empty()) throw DimensionError("split_task: class subset is empty");
  std::vector<int> local(base.classes(), -1);
  for (std::size_t j = 0; j < class_subset.size(); ++j) {
    const int c = class_subset[j];
    if (c < 0 || c >= base.classes()) {
      throw DimensionError("split_task: class " + std::to_string(c) + " out of range");
    }
    local[c] = static_cast<int>(j);
  }
  std::vector<int> keep;
  std::vector<int> new_index(base.n(), -1);
  for (int i = 0; i < base.n(); ++i) {
    if (local[base.gtl[i]] >= 0) {
      new_index[i] = static_cast<int>(keep.size());
      keep.push_back(i);
    }
  }
  if (keep.empty()) throw DimensionError("split_task: no samples fall in the class subset");

  TaskDataset out;
  out.task_id = base.task_id;
  out.inputs.resize(keep.size(), base.dim());
  out.targets = Eigen::MatrixXd::Zero(keep.size(), class_subset.size());
  out.gtl.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.inputs.row(r) = base.inputs.row(keep[r]);
    out.gtl[r] = local[base.gtl[keep[r]]];
    out.targets(r, out.gtl[r]) = 1.0;
  }
  for (int i : base.train_idx) {
    if (new_index[i] >= 0) out.train_idx.push_back(new_index[i]);
  }
  for (int i : base.test_idx) {
    if (new_index[i] >= 0) out.test_idx.push_back(new_index[i]);
  }
  return out;
}

/**
 * Loads a dataset from CSV with header `x0,...,x{d-1},label`; labels are
 * nonnegative integers, one-hot encoded over 0..max(label). Deterministic
 * 80/20 split by row order (first 4/5 of rows train).
 */
inline TaskDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");

  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
  };

  std::string line;
  if (!std::getline(in, line)) throw ParseError("load_csv: file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1 || header.back() != "label") {
    throw ParseError("load_csv: header must be x0..x" + std::to_string(std::max(d - 1, 0)) +
                     ",label (line 1)");
  }
  for (int j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      throw ParseError("load_csv: expected header column x" + std::to_string(j) + ", got '" +
                       header[j] + "' (line 1)");
    }
  }

  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (static_cast<int>(cells.size()) != d + 1) {
      throw ParseError("load_csv: expected " + std::to_string(d + 1) + " columns, got " +
                       std::to_string(cells.size()) + " (line " + std::to_string(lineno) + ")");
    }
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) {
      const char* b = cells[j].data();
      const char* e = b + cells[j].size();
      auto res = std::from_chars(b, e, x[j]);
      if (res.ec != std::errc{} || res.ptr != e) {
        throw ParseError("load_csv: bad float '" + cells[j] + "' (line " +
                         std::to_string(lineno) + ")");
      }
    }
    int label = 0;
    {
      const char* b = cells[d].data();
      const char* e = b + cells[d].size();
      auto res = std::from_chars(b, e, label);
      if (res.ec != std::errc{} || res.ptr != e || label < 0) {
        throw ParseError("load_csv: bad label '" + cells[d] + "' (line " +
                         std::to_string(lineno) + ")");
      }
    }
    rows.push_back(std::move(x));
    labels.push_back(label);
  }
  if (rows.empty()) throw ParseError("load_csv: no data rows in '" + path + "'");

  const int n = static_cast<int>(rows.size());
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  TaskDataset ds;
  ds.inputs.resize(n, d);
  ds.targets = Eigen::MatrixXd::Zero(n, std::max(classes, 1));
  ds.gtl = labels;
  for (int i = 0; i < n; ++i) {
    ds.inputs.row(i) = rows[i].transpose();
    ds.targets(i, labels[i]) = 1.0;
  }
  const int tr = n * 4 / 5;
  for (int i = 0; i < n; ++i) (i < tr ? ds.train_idx : ds.test_idx).push_back(i);
  return ds;
}

/** Writes inputs+labels in the exact format load_csv reads (round-trip safe). */
inline void save_csv(const std::string& path, const TaskDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("save_csv: cannot open '" + path + "' for writing");
  for (int j = 0; j < ds.dim(); ++j) out << "x" << j << ",";
  out << "label\n";
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) out << format_double(ds.inputs(i, j)) << ",";
    out << ds.gtl[i] << "\n";
  }
}

}  // namespace tangentlab
