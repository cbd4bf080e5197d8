// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "csifb/channel.hpp"

namespace csifb {

inline constexpr double kZeroNormGuard = 1e-12;

/// Number of real values in the measurement vector y for compression ratio `cr`.
/// The power scalar p takes one slot of the round(cr * n) budget.
int measurement_length(double cr, int n);

struct SphericalParts {
  double power = 0.0;
  AngularDelayCsi unit;
};

/// p = ||H||_F, H_unit = H / p. Returns (0, zeros) for norms below kZeroNormGuard.
SphericalParts spherical_split(const AngularDelayCsi& h);
/// p * H_unit. Throws DomainError for negative p.
AngularDelayCsi spherical_merge(double power, const AngularDelayCsi& unit);

/// Real vector of length 2*R_d*N_b: all real parts row-major, then all imaginary parts row-major.
/// Read as a 2 x (R_d*N_b) row-major array this is the two-channel image the decoder convolves.
template <typename T>
Vec<T> vectorize(const AngularDelayCsi& h);

/// Inverse of vectorize. Throws DimensionError when x.size() != 2*rows*cols.
template <typename T>
AngularDelayCsi devectorize(const Eigen::Ref<const Vec<T>>& x, int rows, int cols);

/// Trainable measurement matrix Phi, L_y x N.
template <typename T>
struct MeasurementMatrix {
  Mat<T> phi;
  bool trainable = true;

  int measurements() const { return static_cast<int>(phi.rows()); }
  int input_length() const { return static_cast<int>(phi.cols()); }

  /// i.i.d. N(0, 1/N) entries.
  static MeasurementMatrix gaussian(int measurements, int n, std::uint64_t seed);
};

template <typename T>
struct Codeword {
  Vec<T> y;
  T power = 0;
};

template <typename T>
Codeword<T> encode(const AngularDelayCsi& h, const MeasurementMatrix<T>& phi);

/// Wire form: uint32 LE length of y, then y as float32 LE, then p as float32 LE.
template <typename T>
std::vector<std::uint8_t> serialize_codeword(const Codeword<T>& c);
Codeword<float> deserialize_codeword(std::span<const std::uint8_t> bytes);

}  // namespace csifb
