// SPDX-License-Identifier: Apache-2.0
#include "csifb/channel.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace csifb {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_dims(const ChannelDims& dims) {
  if (dims.n_f < 1 || dims.n_b < 1 || dims.r_d < 1 || dims.r_d > dims.n_f) {
    throw ConfigError("invalid channel dimensions: need 1 <= r_d <= n_f and n_b >= 1");
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ (stream * 0xd1b54a32d192ed03ULL));
}

std::uint64_t derive_seed(std::uint64_t root, const std::string& label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h = (h ^ c) * 0x100000001b3ULL;
  }
  return derive_seed(root, h);
}

void ScenarioConfig::validate(const ChannelDims& dims) const {
  check_dims(dims);
  if (num_paths < 1) throw ConfigError("scenario '" + name + "': num_paths must be positive");
  if (!(max_delay_bins >= 1.0) || !(max_delay_bins < dims.r_d)) {
    throw ConfigError("scenario '" + name + "': max_delay_bins must lie in [1, r_d)");
  }
  if (!(delay_decay > 0.0)) throw ConfigError("scenario '" + name + "': delay_decay must be positive");
  if (!(pathloss_range_db >= 0.0)) {
    throw ConfigError("scenario '" + name + "': pathloss_range_db must be nonnegative");
  }
  if (!(angle_spread > 0.0) || angle_spread > std::numbers::pi / 2 + 1e-12) {
    throw ConfigError("scenario '" + name + "': angle_spread must lie in (0, pi/2]");
  }
  if (!std::isfinite(angle_offset) || !std::isfinite(delay_offset_bins)) {
    throw ConfigError("scenario '" + name + "': offsets must be finite");
  }
}

SpatialFrequencyCsi synthesize_channel(std::span<const PathParams> paths, double scale,
                                       double angle_offset, const ChannelDims& dims) {
  check_dims(dims);
  using std::numbers::pi;
  SpatialFrequencyCsi out{CMatrix::Zero(dims.n_f, dims.n_b)};
  Eigen::VectorXcd freq(dims.n_f);
  Eigen::RowVectorXcd steer(dims.n_b);
  for (const auto& path : paths) {
    for (int m = 0; m < dims.n_f; ++m) {
      freq(m) = std::polar(1.0, -2.0 * pi * m * path.delay_bins / dims.n_f);
    }
    const double spatial = pi * std::sin(path.angle) + angle_offset;
    for (int n = 0; n < dims.n_b; ++n) {
      steer(n) = std::polar(1.0, -spatial * n);
    }
    out.values.noalias() += (scale * path.gain) * (freq * steer);
  }
  return out;
}

SpatialFrequencyCsi generate_channel(const ScenarioConfig& cfg, std::int64_t sample_index,
                                     const ChannelDims& dims) {
  cfg.validate(dims);
  using std::numbers::pi;
  std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(sample_index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));

  std::vector<PathParams> paths(static_cast<std::size_t>(cfg.num_paths));
  double total_power = 0.0;
  for (auto& p : paths) {
    p.delay_bins = cfg.delay_offset_bins + cfg.max_delay_bins * unit(rng);
    p.angle = cfg.angle_spread * (2.0 * unit(rng) - 1.0);
    const double power = std::exp(-(p.delay_bins - cfg.delay_offset_bins) / cfg.delay_decay);
    p.gain = std::sqrt(power) * cdouble(gauss(rng), gauss(rng));
    total_power += power;
  }
  for (auto& p : paths) {
    p.gain /= std::sqrt(total_power);
  }
  const double scale_db = cfg.pathloss_range_db * (unit(rng) - 0.5);
  const double scale = std::pow(10.0, scale_db / 20.0);
  return synthesize_channel(paths, scale, cfg.angle_offset, dims);
}

CMatrix unitary_dft(int k) {
  using std::numbers::pi;
  CMatrix f(k, k);
  const double norm = 1.0 / std::sqrt(static_cast<double>(k));
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      // Reduce the exponent modulo k before evaluating for accuracy at large k.
      const auto idx = (static_cast<std::int64_t>(a) * b) % k;
      f(a, b) = std::polar(norm, -2.0 * pi * static_cast<double>(idx) / k);
    }
  }
  return f;
}

AngularDelayTransform::AngularDelayTransform(const ChannelDims& dims)
    : dims_(dims) {
  check_dims(dims);
  fd_ = unitary_dft(dims.n_f);
  fa_ = unitary_dft(dims.n_b);
}

CMatrix AngularDelayTransform::to_angular_delay_full(const SpatialFrequencyCsi& h_sf) const {
  if (h_sf.values.rows() != dims_.n_f || h_sf.values.cols() != dims_.n_b) {
    throw DimensionError("to_angular_delay: expected an N_f x N_b matrix");
  }
  return fd_.adjoint() * h_sf.values * fa_;
}

AngularDelayCsi AngularDelayTransform::to_angular_delay(const SpatialFrequencyCsi& h_sf) const {
  if (h_sf.values.rows() != dims_.n_f || h_sf.values.cols() != dims_.n_b) {
    throw DimensionError("to_angular_delay: expected an N_f x N_b matrix");
  }
  // Only the first R_d rows of F_d^H are needed.
  CMatrix rows = fd_.leftCols(dims_.r_d).adjoint() * h_sf.values;
  return AngularDelayCsi{rows * fa_};
}

SpatialFrequencyCsi AngularDelayTransform::from_angular_delay(const AngularDelayCsi& h) const {
  if (h.values.rows() != dims_.r_d || h.values.cols() != dims_.n_b) {
    throw DimensionError("from_angular_delay: expected an R_d x N_b matrix");
  }
  // F_d * [H; 0] only touches the first R_d columns of F_d.
  CMatrix freq = fd_.leftCols(dims_.r_d) * h.values;
  return SpatialFrequencyCsi{freq * fa_.adjoint()};
}

AngularDelayCsi to_angular_delay(const SpatialFrequencyCsi& h_sf, const ChannelDims& dims) {
  return AngularDelayTransform(dims).to_angular_delay(h_sf);
}

SpatialFrequencyCsi from_angular_delay(const AngularDelayCsi& h, const ChannelDims& dims) {
  return AngularDelayTransform(dims).from_angular_delay(h);
}

}  // namespace csifb
