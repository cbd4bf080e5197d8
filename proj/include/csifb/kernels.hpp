// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <type_traits>

#include "csifb/common.hpp"

namespace csifb::kernels {

/// Spatial extent of a feature map. Feature maps are `channels x (rows*cols)`
/// row-major matrices; every convolution here is 3x3, stride 1, zero padding 1.
struct ImageShape {
  int rows = 0;
  int cols = 0;
  int pixels() const { return rows * cols; }
};

inline constexpr int kTaps = 9;

// Weight layout for conv3x3: out_channels x (in_channels * 9), column ci*9 + ky*3 + kx,
// applied as cross-correlation with offsets (ky-1, kx-1).
// Transposed conv is the adjoint of that conv: weights are in_channels x (out_channels * 9).

/// cols(ci*9 + k, p) = in(ci, p + offset_k), zero outside the image.
template <typename T>
void im2col(const Mat<T>& in, ImageShape shape, Mat<T>& cols);

/// Adjoint of im2col: out(ci, p + offset_k) += cols(ci*9 + k, p). `out` is overwritten.
template <typename T>
void col2im(const Mat<T>& cols, ImageShape shape, Mat<T>& out);

/// out = conv(in) + bias. `bias` may be empty.
template <typename T>
void conv3x3_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in, ImageShape shape,
                     Mat<T>& out);

/// Accumulates into dweight/dbias (when non-null) and writes din (when non-null).
template <typename T>
void conv3x3_backward(const Mat<T>& weight, const Mat<T>& in, const Mat<T>& dout, ImageShape shape,
                      std::type_identity_t<Mat<T>>* dweight,
                      std::type_identity_t<Vec<T>>* dbias, std::type_identity_t<Mat<T>>* din);

template <typename T>
void conv3x3_transposed_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in,
                                ImageShape shape, Mat<T>& out);

template <typename T>
void conv3x3_transposed_backward(const Mat<T>& weight, const Mat<T>& in, const Mat<T>& dout,
                                 ImageShape shape, std::type_identity_t<Mat<T>>* dweight,
                      std::type_identity_t<Vec<T>>* dbias, std::type_identity_t<Mat<T>>* din);

/// Direct nested-loop implementations. Slow; kept as the ground truth for tests and benchmarks.
namespace reference {

template <typename T>
void conv3x3_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in, ImageShape shape,
                     Mat<T>& out);

template <typename T>
void conv3x3_transposed_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in,
                                ImageShape shape, Mat<T>& out);

}  // namespace reference

}  // namespace csifb::kernels
