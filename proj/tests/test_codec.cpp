// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "csifb/codec.hpp"
#include "test_util.hpp"

using namespace csifb;

TEST(Codec, PayloadArithmetic) {
  EXPECT_EQ(measurement_length(0.25, 2048), 511);
  EXPECT_EQ(measurement_length(1.0 / 8, 2048), 255);
  EXPECT_EQ(measurement_length(1.0 / 16, 2048), 127);
  EXPECT_EQ(measurement_length(1.0 / 32, 2048), 63);
  for (double cr : {0.25, 0.125, 0.0625, 0.03125}) {
    EXPECT_EQ(measurement_length(cr, 2048) + 1, std::lround(cr * 2048));
  }
  EXPECT_THROW(measurement_length(0.0, 2048), ConfigError);
  EXPECT_THROW(measurement_length(1.5, 2048), ConfigError);
  EXPECT_THROW(measurement_length(1.0 / 4096, 2048), ConfigError);
}

TEST(Codec, SphericalSplitOfIdentity) {
  CMatrix m = CMatrix::Zero(4, 4);
  m(0, 0) = 1;
  m(1, 1) = 1;
  const auto parts = spherical_split(AngularDelayCsi{m});
  EXPECT_DOUBLE_EQ(parts.power, std::sqrt(2.0));
  EXPECT_TRUE(parts.unit.values.isApprox(m / std::sqrt(2.0)));
}

TEST(Codec, SplitMergeRoundTripAndUnitNorm) {
  test::Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const AngularDelayCsi h{rng.complex_matrix(6, 5) * std::pow(10.0, rng.uniform(-3, 3))};
    const auto parts = spherical_split(h);
    EXPECT_NEAR(parts.unit.norm(), 1.0, 1e-6);
    const auto back = spherical_merge(parts.power, parts.unit);
    EXPECT_LT((back.values - h.values).norm() / h.norm(), 1e-6);
  }
}

TEST(Codec, ZeroChannel) {
  const auto parts = spherical_split(AngularDelayCsi{CMatrix::Zero(3, 3)});
  EXPECT_EQ(parts.power, 0.0);
  EXPECT_EQ(parts.unit.values, CMatrix::Zero(3, 3));
  const MeasurementMatrix<double> phi{Mat<double>::Ones(4, 18), true};
  const auto c = encode<double>(AngularDelayCsi{CMatrix::Zero(3, 3)}, phi);
  EXPECT_EQ(c.power, 0.0);
  EXPECT_EQ(c.y, Vec<double>::Zero(4));
}

TEST(Codec, MergeEdgeCases) {
  test::Rng rng(4);
  const AngularDelayCsi u{rng.complex_matrix(3, 2)};
  EXPECT_EQ(spherical_merge(1.0, u).values, u.values);
  EXPECT_EQ(spherical_merge(0.0, u).values, CMatrix::Zero(3, 2));
  EXPECT_THROW(spherical_merge(-1.0, u), DomainError);
}

TEST(Codec, VectorizeLayout) {
  CMatrix m(2, 3);
  m << cdouble(1, 7), cdouble(2, 8), cdouble(3, 9), cdouble(4, 10), cdouble(5, 11), cdouble(6, 12);
  const Vec<double> x = vectorize<double>(AngularDelayCsi{m});
  ASSERT_EQ(x.size(), 12);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(x(k), k + 1);
  EXPECT_EQ(devectorize<double>(x, 2, 3).values, m);
  EXPECT_THROW(devectorize<double>(x, 3, 3), DimensionError);

  const Vec<double> real = vectorize<double>(AngularDelayCsi{CMatrix(m.real().cast<cdouble>())});
  EXPECT_EQ(real.tail(6), Vec<double>::Zero(6));
  EXPECT_EQ(vectorize<float>(AngularDelayCsi{CMatrix::Zero(32, 32)}).size(), 2048);
}

TEST(Codec, EncodeWithTruncatedIdentity) {
  test::Rng rng(5);
  const AngularDelayCsi h{rng.complex_matrix(2, 2)};
  const MeasurementMatrix<double> phi{Mat<double>::Identity(8, 8).topRows(3), true};
  const auto c = encode(h, phi);
  const Vec<double> x = vectorize<double>(spherical_split(h).unit);
  EXPECT_EQ(c.y, x.head(3));
  EXPECT_DOUBLE_EQ(c.power, h.norm());
}

TEST(Codec, EncodeMatchesDotProducts) {
  test::Rng rng(6);
  const AngularDelayCsi h{rng.complex_matrix(2, 2)};
  const MeasurementMatrix<double> phi{rng.mat<double>(4, 8), true};
  const auto c = encode(h, phi);
  const Vec<double> x = vectorize<double>(spherical_split(h).unit);
  for (int r = 0; r < 4; ++r) {
    double acc = 0;
    for (int k = 0; k < 8; ++k) acc += phi.phi(r, k) * x(k);
    EXPECT_NEAR(c.y(r), acc, 1e-6);
  }
  const MeasurementMatrix<double> wrong{rng.mat<double>(4, 6), true};
  EXPECT_THROW(encode(h, wrong), DimensionError);
}

TEST(Codec, ScaleOnlyMovesThePower) {
  test::Rng rng(7);
  const AngularDelayCsi h{rng.complex_matrix(4, 4)};
  const auto phi = MeasurementMatrix<double>::gaussian(7, 32, 1);
  const auto c = encode(h, phi);
  for (double a : {1e-3, 0.5, 3.0, 1e4}) {
    const auto ca = encode(AngularDelayCsi{h.values * a}, phi);
    EXPECT_LT((ca.y - c.y).norm(), 1e-12 * c.y.norm());
    EXPECT_NEAR(ca.power, a * c.power, 1e-12 * a * c.power);
  }
}

TEST(Codec, GaussianMatrixStatistics) {
  const auto phi = MeasurementMatrix<double>::gaussian(200, 400, 11);
  EXPECT_EQ(phi.measurements(), 200);
  EXPECT_EQ(phi.input_length(), 400);
  const double var = phi.phi.squaredNorm() / static_cast<double>(phi.phi.size());
  EXPECT_NEAR(var, 1.0 / 400, 0.05 / 400);
  EXPECT_EQ(phi.phi, MeasurementMatrix<double>::gaussian(200, 400, 11).phi);
}

TEST(Codec, CodewordWireFormat) {
  Codeword<float> c{Vec<float>::LinSpaced(5, -1, 1), 2.5f};
  const auto bytes = serialize_codeword(c);
  ASSERT_EQ(bytes.size(), 4u + 4u * 6u);
  EXPECT_EQ(bytes[0], 5);
  EXPECT_EQ(bytes[1] | bytes[2] | bytes[3], 0);
  const auto back = deserialize_codeword(bytes);
  EXPECT_EQ(back.y, c.y);
  EXPECT_EQ(back.power, 2.5f);
  auto shorter = bytes;
  shorter.pop_back();
  EXPECT_THROW(deserialize_codeword(shorter), FormatError);
}
