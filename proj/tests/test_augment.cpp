// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "csifb/augment.hpp"
#include "csifb/transnet.hpp"
#include "test_util.hpp"

using namespace csifb;
using std::numbers::pi;

namespace {

Dataset random_base(test::Rng& rng, int count, int rows = 4, int cols = 6) {
  Dataset ds;
  ds.name = "base";
  ds.r_d = rows;
  ds.n_b = cols;
  for (int k = 0; k < count; ++k) ds.samples.push_back({rng.complex_matrix(rows, cols)});
  return ds;
}

}  // namespace

TEST(Augment, SplitExamples) {
  auto one = split_mag_phase(AngularDelayCsi{CMatrix::Constant(1, 1, cdouble(1, 0))});
  EXPECT_EQ(one.mag(0, 0), 1.0);
  EXPECT_EQ(one.phase(0, 0), 0.0);
  auto j2 = split_mag_phase(AngularDelayCsi{CMatrix::Constant(1, 1, cdouble(0, 2))});
  EXPECT_EQ(j2.mag(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(j2.phase(0, 0), pi / 2);
  auto zero = split_mag_phase(AngularDelayCsi{CMatrix::Constant(1, 1, cdouble(0, -0.0))});
  EXPECT_EQ(zero.phase(0, 0), 0.0);
  auto neg = split_mag_phase(AngularDelayCsi{CMatrix::Constant(1, 1, cdouble(-1, -0.0))});
  EXPECT_DOUBLE_EQ(neg.phase(0, 0), pi);

  test::Rng rng(1);
  const AngularDelayCsi h{rng.complex_matrix(5, 7)};
  const auto mp = split_mag_phase(h);
  EXPECT_LT((combine_mag_phase(mp.mag, mp.phase).values - h.values).norm(), 1e-6);
  EXPECT_TRUE((mp.phase.array() > -pi).all() && (mp.phase.array() <= pi).all());
}

TEST(Augment, WrapPhase) {
  EXPECT_DOUBLE_EQ(wrap_phase(pi), pi);
  EXPECT_DOUBLE_EQ(wrap_phase(-pi), pi);
  EXPECT_NEAR(wrap_phase(3 * pi / 2), -pi / 2, 1e-15);
  EXPECT_NEAR(wrap_phase(-5 * pi), pi, 1e-12);
  EXPECT_EQ(wrap_phase(0.25), 0.25);
}

TEST(Augment, MagnitudeShiftExamples) {
  Eigen::MatrixXd mag(3, 3);
  mag << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Eigen::MatrixXd expect(3, 3);
  expect << 4, 5, 6, 7, 8, 9, 0, 0, 0;
  EXPECT_EQ(magnitude_shift(mag, 1, 0), expect);
  EXPECT_EQ(magnitude_shift(mag, 0, 0), mag);
  EXPECT_THROW(magnitude_shift(mag, 2, 0), DomainError);
  EXPECT_THROW(magnitude_shift(mag, 0, -3), DomainError);
}

TEST(Augment, MagnitudeShiftMatchesIndexOracle) {
  test::Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd mag = rng.real_matrix(4, 4).cwiseAbs();
    const int i = rng.integer(-2, 2), j = rng.integer(-2, 2);
    const auto out = magnitude_shift(mag, i, j);
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) {
        const double want = (m + i >= 0 && m + i < 4) ? mag(m + i, (n + j + 4) % 4) : 0.0;
        EXPECT_EQ(out(m, n), want);
      }
    EXPECT_LE(out.norm(), mag.norm() + 1e-15);
  }
}

TEST(Augment, AngularOnlyShiftIsACircularRotation) {
  test::Rng rng(3);
  const AngularDelayCsi h{rng.complex_matrix(4, 6)};
  const Eigen::MatrixXd mag = h.values.cwiseAbs();
  for (int j = -3; j <= 3; ++j) {
    const auto out = magnitude_shift(mag, 0, j);
    EXPECT_EQ(out, circular_shift(AngularDelayCsi{mag.cast<cdouble>()}, 0, -j).values.real());
    EXPECT_NEAR(out.norm(), mag.norm(), 1e-12);
  }
}

TEST(Augment, PhaseRowShiftContract) {
  test::Rng rng(4);
  const AngularDelayCsi h{rng.complex_matrix(5, 4)};
  const auto mp = split_mag_phase(h);
  const auto shifted = phase_randomize(mp.phase, rng.engine());
  for (int m = 0; m < 5; ++m) {
    const double d0 = wrap_phase(shifted(m, 0) - mp.phase(m, 0));
    for (int n = 1; n < 4; ++n) EXPECT_NEAR(std::cos(shifted(m, n) - mp.phase(m, n) - d0), 1.0, 1e-12);
  }
  const auto back = combine_mag_phase(mp.mag, shifted);
  EXPECT_LT((back.values.cwiseAbs() - h.values.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-6);

  const std::vector<double> pis(5, pi);
  const auto negated = combine_mag_phase(mp.mag, phase_shift_rows(mp.phase, pis));
  EXPECT_LT((negated.values + h.values).norm(), 1e-12);
  EXPECT_THROW(phase_shift_rows(mp.phase, std::vector<double>(2, 0.0)), DimensionError);
}

TEST(Augment, PoolSizeCounting) {
  AugmentConfig cfg;
  EXPECT_EQ(augmentation_pool_size(100, cfg), 21700u);
  cfg.use_ads = false;
  EXPECT_EQ(augmentation_pool_size(100, cfg), 100u);
  cfg.use_ads = true;
  cfg.delay_shift = {0, 0};
  cfg.angular_shift = {-1, 1};
  EXPECT_EQ(augmentation_pool_size(7, cfg), 21u);
}

TEST(Augment, DegenerateShiftsRepeatSamples) {
  test::Rng rng(5);
  const auto base = random_base(rng, 4);
  AugmentConfig cfg;
  cfg.angular_shift = {0, 0};
  cfg.delay_shift = {0, 0};
  cfg.use_prs = false;
  cfg.target_size = 12;
  const auto out = augment_dataset(base, cfg);
  ASSERT_EQ(out.size(), 12u);
  std::map<std::size_t, int> hits;
  for (const auto& s : out.samples) {
    bool found = false;
    for (std::size_t k = 0; k < base.size(); ++k) {
      // Stored samples are rounded to float.
      if ((s.values - base.samples[k].values).norm() < 1e-6 * base.samples[k].norm()) {
        ++hits[k];
        found = true;
      }
    }
    EXPECT_TRUE(found);
  }
  for (std::size_t k = 0; k < base.size(); ++k) EXPECT_EQ(hits[k], 3);
}

TEST(Augment, OutputSizeIsExactAndDeterministic) {
  test::Rng rng(6);
  const auto base = random_base(rng, 5);
  for (bool ads : {false, true}) {
    for (bool prs : {false, true}) {
      for (std::size_t target : {5u, 17u, 60u, 200u}) {
        AugmentConfig cfg;
        cfg.angular_shift = {-2, 3};
        cfg.delay_shift = {-1, 2};
        cfg.use_ads = ads;
        cfg.use_prs = prs;
        cfg.target_size = target;
        cfg.seed = 11;
        const auto a = augment_dataset(base, cfg);
        EXPECT_EQ(a.size(), target);
        const auto b = augment_dataset(base, cfg);
        for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(a.samples[k].values, b.samples[k].values);
      }
    }
  }
}

TEST(Augment, PhaseRandomizationKeepsMagnitudes) {
  test::Rng rng(7);
  const auto base = random_base(rng, 3);
  AugmentConfig cfg;
  cfg.use_ads = false;
  cfg.target_size = 9;
  const auto out = augment_dataset(base, cfg);
  // Each output is some base sample with per-row phase rotations.
  for (const auto& s : out.samples) {
    bool match = false;
    for (const auto& b : base.samples) {
      match |= (s.values.cwiseAbs() - b.values.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-6;
    }
    EXPECT_TRUE(match);
  }
  EXPECT_NE(out.samples[0].values, out.samples[3].values);
}

TEST(Augment, ErrorsAndProvenance) {
  test::Rng rng(8);
  const auto base = random_base(rng, 5);
  AugmentConfig cfg;
  cfg.target_size = 4;
  EXPECT_THROW(augment_dataset(base, cfg), ConfigError);
  cfg.target_size = 10;
  EXPECT_THROW(augment_dataset(Dataset{}, cfg), DomainError);
  cfg.angular_shift = {-1, 1};
  cfg.delay_shift = {-1, 1};
  const auto out = augment_dataset(base, cfg);
  EXPECT_EQ(out.name, "base-aug");
  EXPECT_EQ(out.provenance.at("base_size").get<int>(), 5);
  EXPECT_EQ(out.provenance.at("pool_size").get<int>(), 45);

  AugmentConfig bad;
  EXPECT_NO_THROW(bad.validate(32, 32));
  bad.delay_shift = {-16, 0};
  EXPECT_THROW(bad.validate(32, 32), ConfigError);
  bad = {};
  bad.angular_shift = {0, 17};
  EXPECT_THROW(bad.validate(32, 32), ConfigError);
}

TEST(Augment, ConfigJsonRoundTrip) {
  AugmentConfig cfg;
  cfg.angular_shift = {-4, 5};
  cfg.use_prs = false;
  cfg.target_size = 321;
  cfg.seed = 99;
  const auto back = augment_from_json(to_json(cfg));
  EXPECT_EQ(back.angular_shift.lo, -4);
  EXPECT_EQ(back.angular_shift.hi, 5);
  EXPECT_FALSE(back.use_prs);
  EXPECT_EQ(back.target_size, 321u);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(to_json(back), to_json(cfg));
}
