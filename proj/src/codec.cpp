// SPDX-License-Identifier: Apache-2.0
#include "csifb/codec.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace csifb {

int measurement_length(double cr, int n) {
  if (!(cr > 0.0) || cr > 1.0) throw ConfigError("compression ratio must lie in (0, 1]");
  const long total = std::lround(cr * n);
  if (total < 2) throw ConfigError("compression ratio leaves no room for measurements");
  return static_cast<int>(total - 1);
}

SphericalParts spherical_split(const AngularDelayCsi& h) {
  const double p = h.norm();
  if (!std::isfinite(p)) throw DomainError("spherical_split: non-finite CSI");
  if (p < kZeroNormGuard) {
    return {0.0, AngularDelayCsi{CMatrix::Zero(h.values.rows(), h.values.cols())}};
  }
  return {p, AngularDelayCsi{h.values / p}};
}

AngularDelayCsi spherical_merge(double power, const AngularDelayCsi& unit) {
  if (power < 0.0) throw DomainError("spherical_merge: negative power");
  return AngularDelayCsi{unit.values * power};
}

template <typename T>
Vec<T> vectorize(const AngularDelayCsi& h) {
  const Eigen::Index cells = h.values.size();
  Vec<T> x(2 * cells);
  const cdouble* src = h.values.data();  // row-major storage
  for (Eigen::Index k = 0; k < cells; ++k) {
    x(k) = static_cast<T>(src[k].real());
    x(cells + k) = static_cast<T>(src[k].imag());
  }
  return x;
}

template <typename T>
AngularDelayCsi devectorize(const Eigen::Ref<const Vec<T>>& x, int rows, int cols) {
  const Eigen::Index cells = static_cast<Eigen::Index>(rows) * cols;
  if (x.size() != 2 * cells) {
    throw DimensionError("devectorize: expected length " + std::to_string(2 * cells) + ", got " +
                         std::to_string(x.size()));
  }
  AngularDelayCsi h{CMatrix(rows, cols)};
  cdouble* dst = h.values.data();
  for (Eigen::Index k = 0; k < cells; ++k) {
    dst[k] = cdouble(static_cast<double>(x(k)), static_cast<double>(x(cells + k)));
  }
  return h;
}

template <typename T>
MeasurementMatrix<T> MeasurementMatrix<T>::gaussian(int measurements, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  MeasurementMatrix<T> out;
  out.phi.resize(measurements, n);
  for (Eigen::Index k = 0; k < out.phi.size(); ++k) {
    out.phi.data()[k] = static_cast<T>(dist(rng));
  }
  return out;
}

template <typename T>
Codeword<T> encode(const AngularDelayCsi& h, const MeasurementMatrix<T>& phi) {
  if (2 * h.values.size() != phi.input_length()) {
    throw DimensionError("encode: measurement matrix expects length " +
                         std::to_string(phi.input_length()) + ", CSI has " +
                         std::to_string(2 * h.values.size()));
  }
  const auto parts = spherical_split(h);
  Codeword<T> c;
  c.y = phi.phi * vectorize<T>(parts.unit);
  c.power = static_cast<T>(parts.power);
  return c;
}

template <typename T>
std::vector<std::uint8_t> serialize_codeword(const Codeword<T>& c) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * (static_cast<std::size_t>(c.y.size()) + 1));
  auto put_u32 = [&out](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  put_u32(static_cast<std::uint32_t>(c.y.size()));
  for (Eigen::Index k = 0; k < c.y.size(); ++k) {
    put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(c.y(k))));
  }
  put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(c.power)));
  return out;
}

Codeword<float> deserialize_codeword(std::span<const std::uint8_t> bytes) {
  auto get_u32 = [&bytes](std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
    return v;
  };
  if (bytes.size() < 8) throw FormatError("codeword: truncated header");
  const std::uint32_t len = get_u32(0);
  if (bytes.size() != 4 + 4 * (static_cast<std::size_t>(len) + 1)) {
    throw FormatError("codeword: length field " + std::to_string(len) +
                      " does not match payload size " + std::to_string(bytes.size()));
  }
  Codeword<float> c;
  c.y.resize(len);
  for (std::uint32_t k = 0; k < len; ++k) {
    c.y(k) = std::bit_cast<float>(get_u32(4 + 4 * k));
  }
  c.power = std::bit_cast<float>(get_u32(4 + 4 * static_cast<std::size_t>(len)));
  return c;
}

template Vec<float> vectorize<float>(const AngularDelayCsi&);
template Vec<double> vectorize<double>(const AngularDelayCsi&);
template AngularDelayCsi devectorize<float>(const Eigen::Ref<const Vec<float>>&, int, int);
template AngularDelayCsi devectorize<double>(const Eigen::Ref<const Vec<double>>&, int, int);
template struct MeasurementMatrix<float>;
template struct MeasurementMatrix<double>;
template Codeword<float> encode<float>(const AngularDelayCsi&, const MeasurementMatrix<float>&);
template Codeword<double> encode<double>(const AngularDelayCsi&, const MeasurementMatrix<double>&);
template std::vector<std::uint8_t> serialize_codeword<float>(const Codeword<float>&);
template std::vector<std::uint8_t> serialize_codeword<double>(const Codeword<double>&);

}  // namespace csifb
