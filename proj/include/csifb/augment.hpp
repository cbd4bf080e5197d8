// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "csifb/dataset.hpp"

namespace csifb {

struct IntRange {
  int lo = 0;
  int hi = 0;
  int count() const { return hi - lo + 1; }
};

struct AugmentConfig {
  IntRange angular_shift{-15, 15};
  IntRange delay_shift{-3, 3};
  bool use_ads = true;  // angular-delay magnitude shifting
  bool use_prs = true;  // per-delay-row random phase
  std::size_t target_size = 2000;
  std::uint64_t seed = 1;

  /// Delay range within (-R_d/2, R_d/2], angular range within (-N_b/2, N_b/2].
  void validate(int r_d, int n_b) const;
};

struct MagPhase {
  Eigen::MatrixXd mag;    // nonnegative
  Eigen::MatrixXd phase;  // (-pi, pi]; 0 where the entry is zero
};

MagPhase split_mag_phase(const AngularDelayCsi& h);
AngularDelayCsi combine_mag_phase(const Eigen::MatrixXd& mag, const Eigen::MatrixXd& phase);

/// out[m, n] = mag[m + i, (n + j) mod N_b] when 0 <= m + i < R_d, else 0.
/// Steps must satisfy floor(-R_d/2) <= i <= floor(R_d/2) (likewise j with N_b); DomainError otherwise.
Eigen::MatrixXd magnitude_shift(const Eigen::MatrixXd& mag, int i, int j);

/// phase'[m, n] = wrap(phase[m, n] - theta[m]).
Eigen::MatrixXd phase_shift_rows(const Eigen::MatrixXd& phase, std::span<const double> theta);

/// Draws theta_m ~ U(0, 2pi) per delay row and applies phase_shift_rows.
Eigen::MatrixXd phase_randomize(const Eigen::MatrixXd& phase, std::mt19937_64& rng);

/// Wraps an angle to (-pi, pi].
double wrap_phase(double a);

/// Expands `base` to exactly cfg.target_size samples. ADS enumerates every shift in the ranges
/// for every base sample; PRS redraws row phases per output sample. A short pool is filled by
/// repetition (PRS off) or extra phase draws (PRS on); a long pool is subsampled without
/// replacement. Throws ConfigError when target_size < base.size().
Dataset augment_dataset(const Dataset& base, const AugmentConfig& cfg);

/// Number of candidates before fill/subsample: |base| * (#delay shifts * #angular shifts) with ADS.
std::size_t augmentation_pool_size(std::size_t base_size, const AugmentConfig& cfg);

nlohmann::json to_json(const AugmentConfig& cfg);
AugmentConfig augment_from_json(const nlohmann::json& j);

}  // namespace csifb
