// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "csifb/common.hpp"

namespace csifb {

/// Array geometry shared by every component: N_f subcarriers, N_b gNB antennas,
/// and the R_d delay rows kept after truncation.
struct ChannelDims {
  int n_f = 256;
  int n_b = 32;
  int r_d = 32;

  bool operator==(const ChannelDims&) const = default;
};

/// Channel in the spatial-frequency domain, N_f x N_b.
struct SpatialFrequencyCsi {
  CMatrix values;
};

/// Truncated channel in the angular-delay domain, R_d x N_b.
struct AngularDelayCsi {
  CMatrix values;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  double norm() const { return values.norm(); }
};

/// Parameters of the synthetic multipath generator for one propagation scenario.
struct ScenarioConfig {
  std::string name = "outdoor";
  int num_paths = 6;
  double max_delay_bins = 10.0;
  double delay_decay = 4.0;       // exponential power-profile constant, in delay bins
  double pathloss_range_db = 40.0;
  double angle_spread = 1.5707963267948966;  // departure angles ~ U(-spread, spread), at most pi/2
  // Linear phase progression across the array, radians per antenna. A value of
  // -2*pi*j/N_b rotates the angular spectrum by exactly j bins.
  double angle_offset = 0.0;
  double delay_offset_bins = 0.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError when the scenario cannot be generated for `dims`.
  void validate(const ChannelDims& dims) const;
};

/// One propagation path. Delay in subcarrier-spacing bins, angle in radians.
struct PathParams {
  cdouble gain{1.0, 0.0};
  double delay_bins = 0.0;
  double angle = 0.0;
};

/// H_sf[m, n] = scale * sum_p gain_p * exp(-j2pi m tau_p / N_f) * exp(-j pi n sin(theta_p)) * exp(-j n angle_offset)
SpatialFrequencyCsi synthesize_channel(std::span<const PathParams> paths, double scale,
                                       double angle_offset, const ChannelDims& dims);

/// Deterministic draw of sample `sample_index` from scenario `cfg`.
SpatialFrequencyCsi generate_channel(const ScenarioConfig& cfg, std::int64_t sample_index,
                                     const ChannelDims& dims = {});

/// Unitary 2D DFT between the spatial-frequency and truncated angular-delay domains.
/// The DFT matrices are built once per instance.
class AngularDelayTransform {
 public:
  explicit AngularDelayTransform(const ChannelDims& dims);

  const ChannelDims& dims() const { return dims_; }

  /// First R_d rows of F_d^H * H_sf * F_a.
  AngularDelayCsi to_angular_delay(const SpatialFrequencyCsi& h_sf) const;
  /// Full N_f-row transform, before truncation.
  CMatrix to_angular_delay_full(const SpatialFrequencyCsi& h_sf) const;
  /// Zero-pads to N_f rows and applies F_d * (.) * F_a^H.
  SpatialFrequencyCsi from_angular_delay(const AngularDelayCsi& h) const;

 private:
  ChannelDims dims_;
  CMatrix fd_;   // N_f x N_f
  CMatrix fa_;   // N_b x N_b
};

/// Unitary DFT matrix with entries exp(-j 2pi k l / K) / sqrt(K).
CMatrix unitary_dft(int k);

AngularDelayCsi to_angular_delay(const SpatialFrequencyCsi& h_sf, const ChannelDims& dims);
SpatialFrequencyCsi from_angular_delay(const AngularDelayCsi& h, const ChannelDims& dims);

}  // namespace csifb
