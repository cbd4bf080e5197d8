// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csifb/codec.hpp"
#include "csifb/kernels.hpp"

namespace csifb {

/// Architecture of the unfolded decoder.
struct DecoderShape {
  int r_d = 32;
  int n_b = 32;
  int channels = 32;      // C
  int n_iter = 9;         // N_I; 0 is allowed as a diagnostic (adjoint estimate only)
  int measurements = 511; // L_y
  double cr = 0.25;

  int n() const { return 2 * r_d * n_b; }
  kernels::ImageShape image() const { return {r_d, n_b}; }

  /// Shape for compression ratio `cr`; measurements = round(cr * n) - 1.
  static DecoderShape for_ratio(double cr, int r_d = 32, int n_b = 32, int channels = 32,
                                int n_iter = 9);
  void validate() const;

  bool operator==(const DecoderShape&) const = default;
};

/// sgn(x) * max(0, |x| - theta)
template <typename T>
T soft(T x, T theta) {
  if (x > theta) return x - theta;
  if (x < -theta) return x + theta;
  return T(0);
}

template <typename T>
Mat<T> soft(const Mat<T>& x, T theta) {
  return x.unaryExpr([theta](T v) { return soft(v, theta); });
}

/// Positivity map applied to the stored threshold parameter.
template <typename T>
T softplus(T v);

/// Learnable parameters of one unfolded ISTA iteration. All convolutions are 3x3 without bias.
template <typename T>
struct IterationBlockParams {
  T rho = T(0.5);
  T theta_raw = T(0);  // threshold is softplus(theta_raw)
  Mat<T> m;            // C x 2*9
  Mat<T> h1, h2;       // C x C*9, ReLU between
  Mat<T> ht1, ht2;     // C x C*9, ReLU between
  Mat<T> b;            // 2 x C*9

  T theta() const { return softplus(theta_raw); }
};

template <typename T>
struct DecoderParams {
  DecoderShape shape;
  MeasurementMatrix<T> phi;
  std::vector<IterationBlockParams<T>> blocks;

  /// Gaussian Phi (variance 1/N), rho = 0.5, threshold 0.01, small random kernels.
  static DecoderParams initialize(const DecoderShape& shape, std::uint64_t seed);
  /// Same shapes, every value zero. Used as a gradient accumulator.
  static DecoderParams zeros(const DecoderShape& shape);

  /// Every parameter tensor in the fixed serialization order:
  /// phi, then per block rho, theta_raw, m, h1, h2, ht1, ht2, b (each row-major).
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;
  std::size_t parameter_count() const;

  template <typename U>
  DecoderParams<U> cast() const;
};

/// r = x_prev - rho * Phi^T (Phi x_prev - y)
template <typename T>
Vec<T> gradient_step(const Vec<T>& x_prev, const Vec<T>& y, const Mat<T>& phi, T rho);

/// x = r + B(Ht(soft(H(M(r)), theta))) on the two-channel R_d x N_b image of r.
template <typename T>
Vec<T> proximal_block(const Vec<T>& r, const IterationBlockParams<T>& block,
                      kernels::ImageShape image);

/// Unit-norm estimate x^(N_I) from measurements; one codeword per column of `y`.
template <typename T>
BatchMat<T> decode_unit_batch(const BatchMat<T>& y, const DecoderParams<T>& params);

/// Full reconstruction p * devectorize(x^(N_I)), with x^(0) = Phi^T y.
template <typename T>
AngularDelayCsi decode(const Codeword<T>& c, const DecoderParams<T>& params);

/// Encode then decode a batch of channels.
template <typename T>
std::vector<AngularDelayCsi> reconstruct(std::span<const AngularDelayCsi> channels,
                                         const DecoderParams<T>& params);

template <typename T>
struct LossParts {
  T total = 0;
  T mse = 0;
  T constraint = 0;
};

/// Encoder + unfolded decoder evaluated on a batch of unit-norm vectors (one per column),
/// keeping the intermediates needed for backpropagation.
template <typename T>
class UnfoldingPass {
 public:
  UnfoldingPass(const DecoderParams<T>& params, const BatchMat<T>& x_in);

  const BatchMat<T>& output() const { return x_.back(); }
  const BatchMat<T>& measurements() const { return y_; }
  /// sum over samples and blocks of ||Ht(H(M(r))) - M(r)||^2
  T constraint_sum() const { return constraint_sum_; }

  /// Backpropagates `d_output` (dL/dx^(N_I)) plus `constraint_weight * constraint_sum()`.
  /// Parameter gradients are accumulated into `grad` when non-null; dL/dx_in is written to
  /// `d_input` when non-null.
  void backward(const BatchMat<T>& d_output, T constraint_weight, DecoderParams<T>* grad,
                BatchMat<T>* d_input) const;

  struct ProxTrace {
    Mat<T> m, a1, h, s, b1, g, c1, diff;
  };

 private:
  const DecoderParams<T>& params_;
  BatchMat<T> x_in_;
  BatchMat<T> y_;
  std::vector<BatchMat<T>> x_;   // x^(0) .. x^(N_I)
  std::vector<BatchMat<T>> u_;   // Phi x^(k-1) - y
  std::vector<BatchMat<T>> v_;   // Phi^T u
  std::vector<std::vector<ProxTrace>> prox_;  // [block][sample]
  T constraint_sum_ = 0;
};

/// L_MSE + gamma * L_constraint with both terms normalized by (batch size * N).
/// `x_true` holds unit-norm CSI vectors, one per column. Throws DomainError on an empty batch.
template <typename T>
LossParts<T> loss_total(const BatchMat<T>& x_true, const DecoderParams<T>& params, T gamma);

/// loss_total plus its gradient, accumulated into `grad`.
template <typename T>
LossParts<T> loss_and_gradient(const BatchMat<T>& x_true, const DecoderParams<T>& params, T gamma,
                               DecoderParams<T>& grad);

/// Stacks vectorize(spherical_split(h).unit) column by column.
template <typename T>
BatchMat<T> unit_batch(std::span<const AngularDelayCsi> channels);

}  // namespace csifb
