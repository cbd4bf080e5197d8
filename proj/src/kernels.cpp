// SPDX-License-Identifier: Apache-2.0
#include "csifb/kernels.hpp"

#include <algorithm>
#include <cstring>

namespace csifb::kernels {

namespace {

// Valid destination column range [lo, hi) for a source offset dx in a row of width `cols`.
inline void valid_span(int dx, int cols, int& lo, int& hi) {
  lo = std::max(0, -dx);
  hi = std::min(cols, cols - dx);
}

template <typename T>
Mat<T>& scratch() {
  thread_local Mat<T> buf;
  return buf;
}

template <typename T>
void check_weight(const Mat<T>& weight, Eigen::Index in_channels, const char* what) {
  if (weight.cols() != in_channels * kTaps) {
    throw DimensionError(std::string(what) + ": weight/input channel mismatch");
  }
}

}  // namespace

template <typename T>
void im2col(const Mat<T>& in, ImageShape shape, Mat<T>& cols) {
  const int channels = static_cast<int>(in.rows());
  const int w = shape.cols;
  const int h = shape.rows;
  cols.resize(static_cast<Eigen::Index>(channels) * kTaps, shape.pixels());
#pragma omp parallel for schedule(static) if (channels >= 8)
  for (int ci = 0; ci < channels; ++ci) {
    const T* src = in.row(ci).data();
    for (int k = 0; k < kTaps; ++k) {
      const int dy = k / 3 - 1;
      const int dx = k % 3 - 1;
      T* dst = cols.row(ci * kTaps + k).data();
      int lo = 0, hi = 0;
      valid_span(dx, w, lo, hi);
      for (int r = 0; r < h; ++r) {
        T* drow = dst + static_cast<std::ptrdiff_t>(r) * w;
        const int sr = r + dy;
        if (sr < 0 || sr >= h) {
          std::fill(drow, drow + w, T(0));
          continue;
        }
        std::fill(drow, drow + lo, T(0));
        std::memcpy(drow + lo, src + static_cast<std::ptrdiff_t>(sr) * w + lo + dx,
                    sizeof(T) * static_cast<std::size_t>(hi - lo));
        std::fill(drow + hi, drow + w, T(0));
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& cols, ImageShape shape, Mat<T>& out) {
  const int channels = static_cast<int>(cols.rows() / kTaps);
  const int w = shape.cols;
  const int h = shape.rows;
  out.setZero(channels, shape.pixels());
#pragma omp parallel for schedule(static) if (channels >= 8)
  for (int ci = 0; ci < channels; ++ci) {
    T* dst = out.row(ci).data();
    for (int k = 0; k < kTaps; ++k) {
      const int dy = k / 3 - 1;
      const int dx = k % 3 - 1;
      const T* src = cols.row(ci * kTaps + k).data();
      int lo = 0, hi = 0;
      valid_span(dx, w, lo, hi);
      for (int r = 0; r < h; ++r) {
        const int sr = r + dy;
        if (sr < 0 || sr >= h) continue;
        const T* srow = src + static_cast<std::ptrdiff_t>(r) * w;
        T* drow = dst + static_cast<std::ptrdiff_t>(sr) * w + dx;
        for (int c = lo; c < hi; ++c) drow[c] += srow[c];
      }
    }
  }
}

template <typename T>
void conv3x3_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in, ImageShape shape,
                     Mat<T>& out) {
  check_weight(weight, in.rows(), "conv3x3_forward");
  auto& cols = scratch<T>();
  im2col(in, shape, cols);
  out.noalias() = weight * cols;
  if (bias.size() > 0) out.colwise() += bias;
}

template <typename T>
void conv3x3_backward(const Mat<T>& weight, const Mat<T>& in, const Mat<T>& dout, ImageShape shape,
                      std::type_identity_t<Mat<T>>* dweight,
                                 std::type_identity_t<Vec<T>>* dbias,
                                 std::type_identity_t<Mat<T>>* din) {
  check_weight(weight, in.rows(), "conv3x3_backward");
  auto& cols = scratch<T>();
  if (dweight != nullptr) {
    im2col(in, shape, cols);
    dweight->noalias() += dout * cols.transpose();
  }
  if (dbias != nullptr) *dbias += dout.rowwise().sum();
  if (din != nullptr) {
    cols.noalias() = weight.transpose() * dout;
    col2im(cols, shape, *din);
  }
}

template <typename T>
void conv3x3_transposed_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in,
                                ImageShape shape, Mat<T>& out) {
  if (weight.rows() != in.rows()) {
    throw DimensionError("conv3x3_transposed_forward: weight/input channel mismatch");
  }
  auto& cols = scratch<T>();
  cols.noalias() = weight.transpose() * in;
  col2im(cols, shape, out);
  if (bias.size() > 0) out.colwise() += bias;
}

template <typename T>
void conv3x3_transposed_backward(const Mat<T>& weight, const Mat<T>& in, const Mat<T>& dout,
                                 ImageShape shape, std::type_identity_t<Mat<T>>* dweight,
                                 std::type_identity_t<Vec<T>>* dbias,
                                 std::type_identity_t<Mat<T>>* din) {
  if (weight.rows() != in.rows()) {
    throw DimensionError("conv3x3_transposed_backward: weight/input channel mismatch");
  }
  auto& cols = scratch<T>();
  im2col(dout, shape, cols);
  if (dweight != nullptr) dweight->noalias() += in * cols.transpose();
  if (dbias != nullptr) *dbias += dout.rowwise().sum();
  if (din != nullptr) din->noalias() = weight * cols;
}

namespace reference {

template <typename T>
void conv3x3_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in, ImageShape shape,
                     Mat<T>& out) {
  const int cin = static_cast<int>(in.rows());
  const int cout = static_cast<int>(weight.rows());
  out.setZero(cout, shape.pixels());
  for (int co = 0; co < cout; ++co) {
    for (int r = 0; r < shape.rows; ++r) {
      for (int c = 0; c < shape.cols; ++c) {
        T acc = bias.size() > 0 ? bias(co) : T(0);
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int sr = r + ky - 1;
              const int sc = c + kx - 1;
              if (sr < 0 || sr >= shape.rows || sc < 0 || sc >= shape.cols) continue;
              acc += weight(co, ci * kTaps + ky * 3 + kx) * in(ci, sr * shape.cols + sc);
            }
          }
        }
        out(co, r * shape.cols + c) = acc;
      }
    }
  }
}

template <typename T>
void conv3x3_transposed_forward(const Mat<T>& weight, const Vec<T>& bias, const Mat<T>& in,
                                ImageShape shape, Mat<T>& out) {
  const int cin = static_cast<int>(in.rows());
  const int cout = static_cast<int>(weight.cols() / kTaps);
  out.setZero(cout, shape.pixels());
  for (int co = 0; co < cout; ++co) {
    for (int r = 0; r < shape.rows; ++r) {
      for (int c = 0; c < shape.cols; ++c) {
        T acc = bias.size() > 0 ? bias(co) : T(0);
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              // Scatter form of the adjoint: input pixel (sr, sc) feeds (sr + ky - 1, sc + kx - 1).
              const int sr = r - (ky - 1);
              const int sc = c - (kx - 1);
              if (sr < 0 || sr >= shape.rows || sc < 0 || sc >= shape.cols) continue;
              acc += weight(ci, co * kTaps + ky * 3 + kx) * in(ci, sr * shape.cols + sc);
            }
          }
        }
        out(co, r * shape.cols + c) = acc;
      }
    }
  }
}

}  // namespace reference

#define CSIFB_INSTANTIATE_KERNELS(T)                                                             \
  template void im2col<T>(const Mat<T>&, ImageShape, Mat<T>&);                                  \
  template void col2im<T>(const Mat<T>&, ImageShape, Mat<T>&);                                  \
  template void conv3x3_forward<T>(const Mat<T>&, const Vec<T>&, const Mat<T>&, ImageShape,     \
                                   Mat<T>&);                                                    \
  template void conv3x3_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, ImageShape,    \
                                    Mat<T>*, Vec<T>*, Mat<T>*);                                 \
  template void conv3x3_transposed_forward<T>(const Mat<T>&, const Vec<T>&, const Mat<T>&,      \
                                              ImageShape, Mat<T>&);                             \
  template void conv3x3_transposed_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,     \
                                               ImageShape, Mat<T>*, Vec<T>*, Mat<T>*);          \
  template void reference::conv3x3_forward<T>(const Mat<T>&, const Vec<T>&, const Mat<T>&,      \
                                              ImageShape, Mat<T>&);                             \
  template void reference::conv3x3_transposed_forward<T>(const Mat<T>&, const Vec<T>&,          \
                                                         const Mat<T>&, ImageShape, Mat<T>&);

CSIFB_INSTANTIATE_KERNELS(float)
CSIFB_INSTANTIATE_KERNELS(double)

#undef CSIFB_INSTANTIATE_KERNELS

}  // namespace csifb::kernels
