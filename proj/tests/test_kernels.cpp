// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "csifb/kernels.hpp"
#include "test_util.hpp"

using namespace csifb;
using kernels::ImageShape;

namespace {

struct Case {
  int cin, cout, rows, cols;
};

const Case kCases[] = {{1, 1, 1, 1}, {2, 3, 4, 4}, {3, 2, 5, 7}, {8, 16, 6, 3}, {16, 8, 9, 9}};

}  // namespace

TEST(Kernels, ConvMatchesReference) {
  test::Rng rng(1);
  for (const auto& c : kCases) {
    const ImageShape img{c.rows, c.cols};
    const auto w = rng.mat<double>(c.cout, c.cin * kernels::kTaps);
    const Vec<double> b = rng.mat<double>(c.cout, 1);
    const auto x = rng.mat<double>(c.cin, img.pixels());
    Mat<double> fast, ref;
    kernels::conv3x3_forward(w, b, x, img, fast);
    kernels::reference::conv3x3_forward(w, b, x, img, ref);
    EXPECT_LT((fast - ref).norm(), 1e-12 * (1 + ref.norm()));
  }
}

TEST(Kernels, TransposedConvMatchesReference) {
  test::Rng rng(2);
  for (const auto& c : kCases) {
    const ImageShape img{c.rows, c.cols};
    const auto w = rng.mat<float>(c.cin, c.cout * kernels::kTaps);
    const Vec<float> b = rng.mat<float>(c.cout, 1);
    const auto x = rng.mat<float>(c.cin, img.pixels());
    Mat<float> fast, ref;
    kernels::conv3x3_transposed_forward(w, b, x, img, fast);
    kernels::reference::conv3x3_transposed_forward(w, b, x, img, ref);
    EXPECT_LT((fast - ref).norm(), 1e-5f * (1 + ref.norm()));
  }
}

// <conv(x), y> = <x, conv^T(y)> with the same weight matrix.
TEST(Kernels, TransposedIsTheAdjoint) {
  test::Rng rng(3);
  const ImageShape img{5, 6};
  const auto w = rng.mat<double>(4, 3 * kernels::kTaps);
  const auto x = rng.mat<double>(3, img.pixels());
  const auto y = rng.mat<double>(4, img.pixels());
  Mat<double> cx, cty;
  kernels::conv3x3_forward(w, Vec<double>(), x, img, cx);
  kernels::conv3x3_transposed_forward(w, Vec<double>(), y, img, cty);
  EXPECT_NEAR((cx.array() * y.array()).sum(), (x.array() * cty.array()).sum(), 1e-10);
}

TEST(Kernels, Im2colCol2imAreAdjoint) {
  test::Rng rng(4);
  const ImageShape img{4, 5};
  const auto x = rng.mat<double>(3, img.pixels());
  const auto c = rng.mat<double>(3 * kernels::kTaps, img.pixels());
  Mat<double> cols, back;
  kernels::im2col(x, img, cols);
  kernels::col2im(c, img, back);
  EXPECT_NEAR((cols.array() * c.array()).sum(), (x.array() * back.array()).sum(), 1e-10);
}

TEST(Kernels, CenterTapIsIdentity) {
  test::Rng rng(5);
  const ImageShape img{4, 4};
  Mat<double> w = Mat<double>::Zero(2, 2 * kernels::kTaps);
  w(0, 4) = 1;
  w(1, kernels::kTaps + 4) = 1;
  const auto x = rng.mat<double>(2, img.pixels());
  Mat<double> out;
  kernels::conv3x3_forward(w, Vec<double>(), x, img, out);
  EXPECT_EQ(out, x);
}

template <typename Fwd>
void check_backward(bool transposed) {
  test::Rng rng(transposed ? 7 : 6);
  const ImageShape img{3, 4};
  const int cin = 2, cout = 3;
  Mat<double> w = transposed ? rng.mat<double>(cin, cout * kernels::kTaps)
                             : rng.mat<double>(cout, cin * kernels::kTaps);
  Vec<double> b = rng.mat<double>(cout, 1);
  Mat<double> x = rng.mat<double>(cin, img.pixels());
  const Mat<double> probe = rng.mat<double>(cout, img.pixels());
  auto loss = [&] {
    Mat<double> out;
    Fwd{}(w, b, x, img, out);
    return (out.array() * probe.array()).sum();
  };
  Mat<double> dw = Mat<double>::Zero(w.rows(), w.cols()), dx;
  Vec<double> db = Vec<double>::Zero(cout);
  if (transposed) {
    kernels::conv3x3_transposed_backward<double>(w, x, probe, img, &dw, &db, &dx);
  } else {
    kernels::conv3x3_backward<double>(w, x, probe, img, &dw, &db, &dx);
  }
  auto fd = [&](double& v) {
    const double old = v, h = 1e-6;
    v = old + h;
    const double lp = loss();
    v = old - h;
    const double lm = loss();
    v = old;
    return (lp - lm) / (2 * h);
  };
  for (Eigen::Index k = 0; k < w.size(); ++k) EXPECT_NEAR(dw.data()[k], fd(w.data()[k]), 1e-6);
  for (Eigen::Index k = 0; k < b.size(); ++k) EXPECT_NEAR(db(k), fd(b(k)), 1e-6);
  for (Eigen::Index k = 0; k < x.size(); ++k) EXPECT_NEAR(dx.data()[k], fd(x.data()[k]), 1e-6);
}

struct ConvFwd {
  void operator()(const Mat<double>& w, const Vec<double>& b, const Mat<double>& x, ImageShape s,
                  Mat<double>& out) const {
    kernels::conv3x3_forward(w, b, x, s, out);
  }
};
struct TransposedFwd {
  void operator()(const Mat<double>& w, const Vec<double>& b, const Mat<double>& x, ImageShape s,
                  Mat<double>& out) const {
    kernels::conv3x3_transposed_forward(w, b, x, s, out);
  }
};

TEST(Kernels, ConvBackwardMatchesFiniteDifferences) { check_backward<ConvFwd>(false); }
TEST(Kernels, TransposedBackwardMatchesFiniteDifferences) { check_backward<TransposedFwd>(true); }

TEST(Kernels, ChannelMismatchThrows) {
  Mat<double> out;
  EXPECT_THROW(kernels::conv3x3_forward<double>(Mat<double>::Zero(2, 9), Vec<double>(),
                                                Mat<double>::Zero(2, 4), {2, 2}, out),
               DimensionError);
  EXPECT_THROW(kernels::conv3x3_transposed_forward<double>(Mat<double>::Zero(2, 9), Vec<double>(),
                                                           Mat<double>::Zero(3, 4), {2, 2}, out),
               DimensionError);
}
