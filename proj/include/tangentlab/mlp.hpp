#pragma once

// Small dense multilayer perceptrons over 64-bit floats: exact forward
// evaluation, exact reverse-mode gradients of a single output logit with
// respect to the flattened weight vector, a finite-difference cross-check,
// and the first-order model linearized around an anchor weight vector.
//
// Weight layout (fixed, canonical): layers are flattened in order; each
// layer contributes its weight matrix in row-major (fan_out x fan_in) order
// followed by its bias vector. All length-p vector arithmetic in the library
// (Jacobian features, gradient memories, projections) relies on this layout.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tangentlab/errors.hpp"
#include "tangentlab/rng.hpp"
#include "tangentlab/tasks.hpp"

namespace tangentlab {

enum class Activation { relu, identity };

using WeightVector = Eigen::VectorXd;

/** Architecture of a fully connected network: sizes, activation, bias. */
struct Mlp {
  std::vector<int> layer_sizes;  // {d, hidden..., c}
  Activation activation = Activation::relu;
  bool includes_bias = true;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  /** Total trainable parameter count p = sum over layers of (fan_in+bias)*fan_out. */
  int param_count() const {
    int p = 0;
    for (int l = 0; l < num_layers(); ++l) {
      p += (layer_sizes[l] + (includes_bias ? 1 : 0)) * layer_sizes[l + 1];
    }
    return p;
  }

  /** Offset of layer l's weight block inside the flattened vector. */
  int layer_offset(int l) const {
    int off = 0;
    for (int k = 0; k < l; ++k) {
      off += (layer_sizes[k] + (includes_bias ? 1 : 0)) * layer_sizes[k + 1];
    }
    return off;
  }

  void validate() const {
    if (layer_sizes.size() < 2) {
      throw DimensionError("Mlp: need at least input and output layer sizes");
    }
    for (int s : layer_sizes) {
      if (s < 1) throw DimensionError("Mlp: every layer size must be >= 1");
    }
  }
};

namespace detail {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline RowMajorMap layer_weights(const Mlp& net, const WeightVector& w, int l) {
  return RowMajorMap(w.data() + net.layer_offset(l), net.layer_sizes[l + 1],
                     net.layer_sizes[l]);
}

inline Eigen::Map<const Eigen::VectorXd> layer_bias(const Mlp& net, const WeightVector& w,
                                                    int l) {
  const int fan_in = net.layer_sizes[l], fan_out = net.layer_sizes[l + 1];
  return Eigen::Map<const Eigen::VectorXd>(w.data() + net.layer_offset(l) + fan_out * fan_in,
                                           fan_out);
}

// Forward pass over a batch (columns = samples), keeping per-layer
// activations when a cache is supplied. The relu subgradient at exactly 0
// is 0, so the mask is (z > 0).
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[l] before layer l
};

inline Eigen::MatrixXd forward_batch_impl(const Mlp& net, const WeightVector& w,
                                          const Eigen::MatrixXd& X, ForwardCache* cache,
                                          bool check_finite) {
  if (X.rows() != net.input_dim()) {
    throw DimensionError("forward: input has dimension " + std::to_string(X.rows()) +
                         ", network expects " + std::to_string(net.input_dim()));
  }
  if (w.size() != net.param_count()) {
    throw DimensionError("forward: weight vector has length " + std::to_string(w.size()) +
                         ", network expects " + std::to_string(net.param_count()));
  }
  Eigen::MatrixXd a = X;
  if (cache) cache->activations.assign(1, a);
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = layer_weights(net, w, l) * a;
    if (net.includes_bias) z.colwise() += layer_bias(net, w, l);
    if (check_finite && !z.allFinite()) {
      throw NumericalError("jacobian: non-finite pre-activation at layer " + std::to_string(l));
    }
    const bool is_hidden = l + 1 < net.num_layers();
    if (is_hidden && net.activation == Activation::relu) {
      a = z.cwiseMax(0.0);
    } else {
      a = std::move(z);  // identity activation, or the linear output layer
    }
    if (cache && l + 1 < net.num_layers()) cache->activations.push_back(a);
  }
  return a;
}

}  // namespace detail

/** Network outputs (length c) at weights w for a single input. */
inline Eigen::VectorXd forward(const Mlp& net, const WeightVector& w,
                               const Eigen::VectorXd& x) {
  return detail::forward_batch_impl(net, w, x, nullptr, false).col(0);
}

/** Network outputs (c x B) for a batch of inputs stored as columns. */
inline Eigen::MatrixXd forward_batch(const Mlp& net, const WeightVector& w,
                                     const Eigen::MatrixXd& X) {
  return detail::forward_batch_impl(net, w, X, nullptr, false);
}

/**
 * Weighted sum of per-sample logit gradients: sum_i coeff_i * d f_{logit_i}(x_i) / dw.
 * This one routine backs both the per-sample Jacobian (single column,
 * coefficient 1) and the training-loss gradient (coefficients = residuals),
 * so the two are consistent by construction.
 */
inline WeightVector accumulate_logit_gradients(const Mlp& net, const WeightVector& w,
                                               const Eigen::MatrixXd& X,
                                               const std::vector<int>& logits,
                                               const Eigen::VectorXd& coeffs,
                                               bool check_finite = false) {
  const int B = static_cast<int>(X.cols());
  if (static_cast<int>(logits.size()) != B || coeffs.size() != B) {
    throw DimensionError("accumulate_logit_gradients: batch size mismatch");
  }
  detail::ForwardCache cache;
  detail::forward_batch_impl(net, w, X, &cache, check_finite);
  for (int i = 0; i < B; ++i) {
    if (logits[i] < 0 || logits[i] >= net.output_dim()) {
      throw DimensionError("jacobian: logit index " + std::to_string(logits[i]) +
                           " out of range for " + std::to_string(net.output_dim()) +
                           " outputs");
    }
  }

  WeightVector grad = WeightVector::Zero(net.param_count());
  const int L = net.num_layers();
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(net.output_dim(), B);
  for (int i = 0; i < B; ++i) delta(logits[i], i) = coeffs[i];

  for (int l = L - 1; l >= 0; --l) {
    const int fan_in = net.layer_sizes[l], fan_out = net.layer_sizes[l + 1];
    const Eigen::MatrixXd& a_prev = cache.activations[l];
    detail::RowMajorMutMap gw(grad.data() + net.layer_offset(l), fan_out, fan_in);
    gw.noalias() = delta * a_prev.transpose();
    if (net.includes_bias) {
      Eigen::Map<Eigen::VectorXd>(grad.data() + net.layer_offset(l) + fan_out * fan_in,
                                  fan_out) = delta.rowwise().sum();
    }
    if (l > 0) {
      Eigen::MatrixXd back = detail::layer_weights(net, w, l).transpose() * delta;
      if (net.activation == Activation::relu) {
        // a_prev is the post-relu activation of layer l-1; relu'(z) = (z>0),
        // and z>0 exactly where the activation is >0.
        delta = back.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
      } else {
        delta = std::move(back);
      }
    }
  }
  return grad;
}

/** Exact reverse-mode gradient of output component `logit` w.r.t. all p weights. */
inline WeightVector jacobian(const Mlp& net, const WeightVector& w, const Eigen::VectorXd& x,
                             int logit) {
  return accumulate_logit_gradients(net, w, x, {logit}, Eigen::VectorXd::Ones(1),
                                    /*check_finite=*/true);
}

/** Central-difference estimate of `jacobian`, the test oracle for it. */
inline WeightVector finite_diff_jacobian(const Mlp& net, const WeightVector& w,
                                         const Eigen::VectorXd& x, int logit,
                                         double eps = 1e-5) {
  if (eps <= 0.0) throw DimensionError("finite_diff_jacobian: eps must be > 0");
  WeightVector g(net.param_count());
  WeightVector wp = w;
  for (int i = 0; i < net.param_count(); ++i) {
    const double orig = wp[i];
    wp[i] = orig + eps;
    const double fplus = forward(net, wp, x)(logit);
    wp[i] = orig - eps;
    const double fminus = forward(net, wp, x)(logit);
    wp[i] = orig;
    g[i] = (fplus - fminus) / (2.0 * eps);
  }
  return g;
}

/**
 * Gaussian weight initialization: per layer N(0, 2/fan_in) entries, zero
 * bias, drawn from the seeded PRNG in layout order. sqrt(2/fan_in) is the
 * relu-friendly scale that keeps activation magnitudes stable with depth.
 */
inline WeightVector init_weights(const Mlp& net, std::uint64_t seed) {
  net.validate();
  SplitMix64 rng(seed);
  WeightVector w = WeightVector::Zero(net.param_count());
  for (int l = 0; l < net.num_layers(); ++l) {
    const int fan_in = net.layer_sizes[l], fan_out = net.layer_sizes[l + 1];
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    double* block = w.data() + net.layer_offset(l);
    for (int i = 0; i < fan_out * fan_in; ++i) block[i] = sd * rng.next_gaussian();
    // bias entries stay zero
  }
  return w;
}

/**
 * The tangent model around anchor weights w0:
 *   f_lin(w, x) = f_{w0}(x) + <phi(x), w - w0>,  phi(x) = d f_{w0}(x) / dw.
 * The feature map phi closes over (net, w0) and is constant in w; it is the
 * kernel feature vector used by the closed-form recursion.
 */
struct LinearizedModel {
  Mlp net;
  WeightVector anchor;                  // w0
  Eigen::VectorXd anchor_gtl_outputs;   // f_{w0}(x_i) at each sample's ground-truth logit

  double anchor_output(const Eigen::VectorXd& x, int logit) const {
    return forward(net, anchor, x)(logit);
  }

  Eigen::VectorXd feature(const Eigen::VectorXd& x, int logit) const {
    return jacobian(net, anchor, x, logit);
  }

  /** Feature matrix (p x n) for inputs given as rows of X with per-row logits. */
  Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& X, const std::vector<int>& logits) const {
    Eigen::MatrixXd F(net.param_count(), X.rows());
    for (int i = 0; i < X.rows(); ++i) {
      F.col(i) = jacobian(net, anchor, X.row(i).transpose(), logits[i]);
    }
    return F;
  }

  double predict(const WeightVector& w, const Eigen::VectorXd& x, int logit) const {
    return anchor_output(x, logit) + feature(x, logit).dot(w - anchor);
  }
};

/**
 * Linearizes the network at w0 over a dataset: caches the anchor outputs at
 * each sample's ground-truth logit and exposes the feature map. Exact at the
 * anchor by construction; a first-order model elsewhere.
 */
inline LinearizedModel linearize(const Mlp& net, const WeightVector& w0,
                                 const TaskDataset& data) {
  if (data.dim() != net.input_dim()) {
    throw DimensionError("linearize: dataset dimension " + std::to_string(data.dim()) +
                         " does not match network input " + std::to_string(net.input_dim()));
  }
  LinearizedModel lin{net, w0, Eigen::VectorXd(data.n())};
  for (int i = 0; i < data.n(); ++i) {
    lin.anchor_gtl_outputs[i] =
        forward(net, w0, data.inputs.row(i).transpose())(data.gtl[i]);
  }
  return lin;
}

/** f_lin(w, x) for the selected logit. */
inline double linear_predict(const LinearizedModel& lin, const WeightVector& w,
                             const Eigen::VectorXd& x, int logit) {
  return lin.predict(w, x, logit);
}

}  // namespace tangentlab
