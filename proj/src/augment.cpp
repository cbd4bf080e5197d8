// SPDX-License-Identifier: Apache-2.0
#include "csifb/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace csifb {

namespace {

using std::numbers::pi;

int floor_half(int n, int sign) {
  // floor(sign * n / 2) for sign = +-1
  return static_cast<int>(std::floor(sign * n / 2.0));
}

void check_step(int step, int extent, const char* axis) {
  if (step < floor_half(extent, -1) || step > floor_half(extent, +1)) {
    throw DomainError(std::string("magnitude_shift: ") + axis + " step " + std::to_string(step) +
                      " outside [" + std::to_string(floor_half(extent, -1)) + ", " +
                      std::to_string(floor_half(extent, +1)) + "]");
  }
}

// Candidate k of the ADS pool: base sample index and shift pair.
struct PoolEntry {
  std::size_t sample;
  int i;
  int j;
};

PoolEntry pool_entry(std::size_t k, const AugmentConfig& cfg) {
  if (!cfg.use_ads) return {k, 0, 0};
  const auto per_sample =
      static_cast<std::size_t>(cfg.delay_shift.count()) * static_cast<std::size_t>(cfg.angular_shift.count());
  const std::size_t s = k / per_sample;
  const std::size_t rem = k % per_sample;
  const int i = cfg.delay_shift.lo + static_cast<int>(rem / static_cast<std::size_t>(cfg.angular_shift.count()));
  const int j = cfg.angular_shift.lo + static_cast<int>(rem % static_cast<std::size_t>(cfg.angular_shift.count()));
  return {s, i, j};
}

}  // namespace

void AugmentConfig::validate(int r_d, int n_b) const {
  auto in_half_open = [](IntRange r, int extent) {
    // (-extent/2, extent/2]
    return r.lo <= r.hi && 2 * r.lo > -extent && 2 * r.hi <= extent;
  };
  if (use_ads) {
    if (!in_half_open(delay_shift, r_d)) throw ConfigError("augment: delay shift range out of bounds");
    if (!in_half_open(angular_shift, n_b)) {
      throw ConfigError("augment: angular shift range out of bounds");
    }
  }
  if (target_size < 1) throw ConfigError("augment: target_size must be positive");
}

double wrap_phase(double a) {
  double w = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

MagPhase split_mag_phase(const AngularDelayCsi& h) {
  MagPhase out{Eigen::MatrixXd(h.rows(), h.cols()), Eigen::MatrixXd(h.rows(), h.cols())};
  for (int m = 0; m < h.rows(); ++m) {
    for (int n = 0; n < h.cols(); ++n) {
      const cdouble z = h.values(m, n);
      const double mag = std::abs(z);
      out.mag(m, n) = mag;
      out.phase(m, n) = mag == 0.0 ? 0.0 : wrap_phase(std::arg(z));
    }
  }
  return out;
}

AngularDelayCsi combine_mag_phase(const Eigen::MatrixXd& mag, const Eigen::MatrixXd& phase) {
  if (mag.rows() != phase.rows() || mag.cols() != phase.cols()) {
    throw DimensionError("combine_mag_phase: shape mismatch");
  }
  AngularDelayCsi h{CMatrix(mag.rows(), mag.cols())};
  for (Eigen::Index m = 0; m < mag.rows(); ++m) {
    for (Eigen::Index n = 0; n < mag.cols(); ++n) h.values(m, n) = std::polar(mag(m, n), phase(m, n));
  }
  return h;
}

Eigen::MatrixXd magnitude_shift(const Eigen::MatrixXd& mag, int i, int j) {
  const int rows = static_cast<int>(mag.rows());
  const int cols = static_cast<int>(mag.cols());
  check_step(i, rows, "delay");
  check_step(j, cols, "angular");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (int m = 0; m < rows; ++m) {
    const int src = m + i;
    if (src < 0 || src >= rows) continue;  // truncated delay
    for (int n = 0; n < cols; ++n) out(m, n) = mag(src, ((n + j) % cols + cols) % cols);
  }
  return out;
}

Eigen::MatrixXd phase_shift_rows(const Eigen::MatrixXd& phase, std::span<const double> theta) {
  if (static_cast<Eigen::Index>(theta.size()) != phase.rows()) {
    throw DimensionError("phase_shift_rows: one angle per row required");
  }
  Eigen::MatrixXd out(phase.rows(), phase.cols());
  for (Eigen::Index m = 0; m < phase.rows(); ++m) {
    for (Eigen::Index n = 0; n < phase.cols(); ++n) {
      out(m, n) = wrap_phase(phase(m, n) - theta[static_cast<std::size_t>(m)]);
    }
  }
  return out;
}

Eigen::MatrixXd phase_randomize(const Eigen::MatrixXd& phase, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 2.0 * pi);
  std::vector<double> theta(static_cast<std::size_t>(phase.rows()));
  for (auto& t : theta) t = dist(rng);
  return phase_shift_rows(phase, theta);
}

std::size_t augmentation_pool_size(std::size_t base_size, const AugmentConfig& cfg) {
  if (!cfg.use_ads) return base_size;
  return base_size * static_cast<std::size_t>(cfg.delay_shift.count()) *
         static_cast<std::size_t>(cfg.angular_shift.count());
}

Dataset augment_dataset(const Dataset& base, const AugmentConfig& cfg) {
  if (base.empty()) throw DomainError("augment_dataset: empty base dataset");
  cfg.validate(base.r_d, base.n_b);
  if (cfg.target_size < base.size()) {
    throw ConfigError("augment_dataset: target_size " + std::to_string(cfg.target_size) +
                      " is smaller than the base size " + std::to_string(base.size()));
  }
  const std::size_t pool = augmentation_pool_size(base.size(), cfg);

  // Output slot t draws from pool candidate picks[t].
  std::vector<std::size_t> picks(cfg.target_size);
  if (pool >= cfg.target_size) {
    std::vector<std::size_t> all(pool);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, "subsample"));
    for (std::size_t t = 0; t < cfg.target_size; ++t) {  // partial Fisher-Yates
      std::uniform_int_distribution<std::size_t> d(t, pool - 1);
      std::swap(all[t], all[d(rng)]);
    }
    std::copy_n(all.begin(), cfg.target_size, picks.begin());
    std::sort(picks.begin(), picks.end());
  } else {
    for (std::size_t t = 0; t < cfg.target_size; ++t) picks[t] = t % pool;
  }

  std::vector<MagPhase> parts(base.size());
  for (std::size_t s = 0; s < base.size(); ++s) parts[s] = split_mag_phase(base.samples[s]);

  Dataset out;
  out.name = base.name + "-aug";
  out.split = base.split;
  out.scenario = base.scenario;
  out.r_d = base.r_d;
  out.n_b = base.n_b;
  out.samples.resize(cfg.target_size);
  const auto n = static_cast<std::int64_t>(cfg.target_size);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < n; ++t) {
    const auto e = pool_entry(picks[static_cast<std::size_t>(t)], cfg);
    const auto& src = parts[e.sample];
    Eigen::MatrixXd mag = cfg.use_ads ? magnitude_shift(src.mag, e.i, e.j) : src.mag;
    Eigen::MatrixXd phase = src.phase;
    if (cfg.use_prs) {
      std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, "phase"), static_cast<std::uint64_t>(t)));
      phase = phase_randomize(phase, rng);
    }
    auto h = combine_mag_phase(mag, phase);
    round_to_storage(h);
    out.samples[static_cast<std::size_t>(t)] = std::move(h);
  }
  out.provenance = {{"base_dataset", base.name},
                    {"base_size", base.size()},
                    {"pool_size", pool},
                    {"augment", to_json(cfg)}};
  return out;
}

nlohmann::json to_json(const AugmentConfig& cfg) {
  return {{"angular_shift", {cfg.angular_shift.lo, cfg.angular_shift.hi}},
          {"delay_shift", {cfg.delay_shift.lo, cfg.delay_shift.hi}},
          {"use_ads", cfg.use_ads},
          {"use_prs", cfg.use_prs},
          {"target_size", cfg.target_size},
          {"seed", cfg.seed}};
}

AugmentConfig augment_from_json(const nlohmann::json& j) {
  AugmentConfig cfg;
  if (j.contains("angular_shift")) {
    cfg.angular_shift = {j["angular_shift"].at(0).get<int>(), j["angular_shift"].at(1).get<int>()};
  }
  if (j.contains("delay_shift")) {
    cfg.delay_shift = {j["delay_shift"].at(0).get<int>(), j["delay_shift"].at(1).get<int>()};
  }
  cfg.use_ads = j.value("use_ads", cfg.use_ads);
  cfg.use_prs = j.value("use_prs", cfg.use_prs);
  cfg.target_size = j.value("target_size", cfg.target_size);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

}  // namespace csifb
