// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "csifb/dataset.hpp"
#include "test_util.hpp"

using namespace csifb;
using std::numbers::pi;

namespace {

// Direct double sum of F_d^H H F_a with F[a,b] = exp(-j 2 pi a b / K) / sqrt(K).
CMatrix dft_oracle(const CMatrix& h) {
  const auto nf = h.rows(), nb = h.cols();
  CMatrix out(nf, nb);
  for (Eigen::Index r = 0; r < nf; ++r) {
    for (Eigen::Index c = 0; c < nb; ++c) {
      cdouble acc = 0;
      for (Eigen::Index m = 0; m < nf; ++m) {
        for (Eigen::Index n = 0; n < nb; ++n) {
          const double ang = 2 * pi * (static_cast<double>(r * m) / nf - static_cast<double>(n * c) / nb);
          acc += h(m, n) * std::polar(1.0, ang);
        }
      }
      out(r, c) = acc / std::sqrt(static_cast<double>(nf * nb));
    }
  }
  return out;
}

}  // namespace

TEST(Channel, SingleBroadsidePathIsAllOnes) {
  const ChannelDims dims{16, 8, 8};
  const PathParams path{{1, 0}, 0.0, 0.0};
  const auto h = synthesize_channel(std::span(&path, 1), 1.0, 0.0, dims);
  EXPECT_TRUE(h.values.isApprox(CMatrix::Ones(16, 8), 1e-15));
}

TEST(Channel, GenerationIsDeterministic) {
  ScenarioConfig cfg;
  const auto a = generate_channel(cfg, 17);
  const auto b = generate_channel(cfg, 17);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, generate_channel(cfg, 18).values);
  EXPECT_TRUE(a.values.allFinite());
}

TEST(Channel, IntegerDelayLandsInOneRow) {
  const ChannelDims dims{64, 8, 16};
  const PathParams path{{1, 0}, 3.0, 0.0};
  const auto h = to_angular_delay(synthesize_channel(std::span(&path, 1), 1.0, 0.0, dims), dims);
  const double total = h.values.squaredNorm();
  EXPECT_NEAR(h.values.row(3).squaredNorm() / total, 1.0, 1e-12);
}

TEST(Channel, AngleOffsetRotatesAngularBins) {
  const ChannelDims dims{32, 16, 16};
  const PathParams path{{0.3, -0.8}, 2.4, 0.37};
  const auto base = to_angular_delay(synthesize_channel(std::span(&path, 1), 1.0, 0.0, dims), dims);
  const auto moved =
      to_angular_delay(synthesize_channel(std::span(&path, 1), 1.0, -2 * pi * 5 / 16, dims), dims);
  for (int m = 0; m < 16; ++m) {
    for (int n = 0; n < 16; ++n) EXPECT_NEAR(std::abs(moved.values(m, (n + 5) % 16) - base.values(m, n)), 0, 1e-12);
  }
}

TEST(Channel, DftMatchesBruteForceOracle) {
  const ChannelDims dims{8, 4, 8};
  test::Rng rng(5);
  const CMatrix h = rng.complex_matrix(8, 4);
  const AngularDelayTransform t(dims);
  const CMatrix fast = t.to_angular_delay(SpatialFrequencyCsi{h}).values;
  const CMatrix oracle = dft_oracle(h);
  EXPECT_LT((fast - oracle).norm() / oracle.norm(), 1e-10);
}

TEST(Channel, ZeroAndDeltaInputs) {
  const ChannelDims dims{8, 4, 8};
  const AngularDelayTransform t(dims);
  EXPECT_EQ(t.to_angular_delay(SpatialFrequencyCsi{CMatrix::Zero(8, 4)}).values, CMatrix::Zero(8, 4));
  EXPECT_EQ(t.from_angular_delay(AngularDelayCsi{CMatrix::Zero(8, 4)}).values, CMatrix::Zero(8, 4));
  CMatrix delta = CMatrix::Zero(8, 4);
  delta(0, 0) = 1;
  const CMatrix h = unitary_dft(8) * delta * unitary_dft(4).adjoint();
  const CMatrix back = t.to_angular_delay(SpatialFrequencyCsi{h}).values;
  EXPECT_LT((back - delta).norm(), 1e-14);
}

TEST(Channel, RoundTripAndNormPreservation) {
  const ChannelDims dims{32, 8, 8};
  const AngularDelayTransform t(dims);
  test::Rng rng(9);
  for (int k = 0; k < 10; ++k) {
    const AngularDelayCsi h{rng.complex_matrix(8, 8)};
    const auto sf = t.from_angular_delay(h);
    EXPECT_NEAR(sf.values.norm(), h.norm(), 1e-12 * h.norm());
    EXPECT_LT((t.to_angular_delay(sf).values - h.values).norm(), 1e-12 * h.norm());
    // Unitarity before truncation.
    const SpatialFrequencyCsi any{rng.complex_matrix(32, 8)};
    EXPECT_NEAR(t.to_angular_delay_full(any).norm(), any.values.norm(), 1e-12 * any.values.norm());
  }
  // Paths with delays inside the window come back after truncation.
  std::vector<PathParams> paths{{{1, 0}, 1.0, 0.2}, {{0, 0.5}, 4.0, -0.7}};
  const auto sf = synthesize_channel(paths, 1.0, 0.0, dims);
  const auto back = t.from_angular_delay(t.to_angular_delay(sf));
  EXPECT_LT((back.values - sf.values).norm(), 1e-10 * sf.values.norm());
}

TEST(Channel, DimensionErrors) {
  const AngularDelayTransform t(ChannelDims{8, 4, 4});
  EXPECT_THROW(t.to_angular_delay(SpatialFrequencyCsi{CMatrix::Zero(4, 4)}), DimensionError);
  EXPECT_THROW(t.from_angular_delay(AngularDelayCsi{CMatrix::Zero(8, 4)}), DimensionError);
}

TEST(Channel, InvalidScenarioIsRejected) {
  ScenarioConfig cfg;
  cfg.max_delay_bins = 40;
  EXPECT_THROW(generate_channel(cfg, 0), ConfigError);
  cfg = {};
  cfg.num_paths = 0;
  EXPECT_THROW(generate_channel(cfg, 0), ConfigError);
  cfg = {};
  cfg.delay_decay = 0;
  EXPECT_THROW(cfg.validate({}), ConfigError);
  cfg = {};
  cfg.angle_spread = 2.0;
  EXPECT_THROW(cfg.validate({}), ConfigError);
}

// Integer-bin delays inside the window lose nothing to truncation.
TEST(Channel, TruncationKeepsIntegerDelayEnergy) {
  const ChannelDims dims;
  const AngularDelayTransform t(dims);
  test::Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    std::vector<PathParams> paths;
    for (int p = 0; p < 6; ++p) {
      paths.push_back({{rng.normal(), rng.normal()}, static_cast<double>(rng.integer(0, dims.r_d - 2)),
                       rng.uniform(-pi / 2, pi / 2)});
    }
    const auto sf = synthesize_channel(paths, 1.0, 0.0, dims);
    EXPECT_GE(t.to_angular_delay(sf).values.squaredNorm() / sf.values.squaredNorm(), 1.0 - 1e-12);
  }
}

// Fractional delays spread over every delay bin through the sinc sidelobes of the finite
// subcarrier window, and paths near delay 0 leak into the wrapped tail. Generated channels keep
// about 97.8% of their energy; 0.97 pins that level.
TEST(Channel, TruncationKeepsMostGeneratedEnergy) {
  const ChannelDims dims;
  const AngularDelayTransform t(dims);
  for (double max_delay : {10.0, 20.0, 30.0}) {
    ScenarioConfig cfg;
    cfg.max_delay_bins = max_delay;
    double kept = 0;
    for (int k = 0; k < 50; ++k) {
      const auto sf = generate_channel(cfg, k, dims);
      kept += t.to_angular_delay(sf).values.squaredNorm() / sf.values.squaredNorm();
    }
    EXPECT_GE(kept / 50, 0.97) << "max_delay_bins=" << max_delay;
  }
}

TEST(Dataset, SaveLoadIsBitExact) {
  test::TempDir dir;
  ScenarioConfig cfg = test::small_scenario();
  cfg.name = "tiny";
  const ChannelDims dims{32, 8, 8};
  const auto ds = generate_dataset(cfg, Split::test, 5, 3, dims);
  save_dataset(ds, dir.path() / "d");
  const auto back = load_dataset(dir.path() / "d");
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.name, ds.name);
  EXPECT_EQ(back.split, Split::test);
  EXPECT_EQ(back.r_d, 8);
  EXPECT_EQ(back.n_b, 8);
  EXPECT_EQ(to_json(back.scenario), to_json(ds.scenario));
  for (std::size_t k = 0; k < ds.size(); ++k) EXPECT_EQ(back.samples[k].values, ds.samples[k].values);
}

TEST(Dataset, EmptyDatasetRoundTrips) {
  test::TempDir dir;
  Dataset ds;
  ds.name = "empty";
  save_dataset(ds, dir.path() / "e");
  const auto manifest = read_json_file(dir.path() / "e" / "manifest.json");
  EXPECT_EQ(manifest.at("n_samples").get<int>(), 0);
  EXPECT_EQ(std::filesystem::file_size(dir.path() / "e" / "data.bin"), 0u);
  EXPECT_TRUE(load_dataset(dir.path() / "e").empty());
}

TEST(Dataset, TruncatedBlobIsAnError) {
  test::TempDir dir;
  const auto ds = generate_dataset(test::small_scenario(), Split::train, 2, 0, ChannelDims{32, 8, 8});
  save_dataset(ds, dir.path() / "t");
  const auto blob = dir.path() / "t" / "data.bin";
  std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 4);
  EXPECT_THROW(load_dataset(dir.path() / "t"), FormatError);
}

TEST(Dataset, UnsupportedVersionIsAnError) {
  test::TempDir dir;
  const auto ds = generate_dataset(test::small_scenario(), Split::train, 1, 0, ChannelDims{32, 8, 8});
  save_dataset(ds, dir.path() / "v");
  auto manifest = read_json_file(dir.path() / "v" / "manifest.json");
  manifest["format_version"] = 99;
  write_json_file(dir.path() / "v" / "manifest.json", manifest);
  EXPECT_THROW(load_dataset(dir.path() / "v"), FormatError);
}

TEST(Dataset, ParallelGenerationMatchesSerialCalls) {
  const ChannelDims dims{32, 8, 8};
  const ScenarioConfig cfg = test::small_scenario();
  const auto ds = generate_dataset(cfg, Split::train, 6, 10, dims);
  for (int k = 0; k < 6; ++k) {
    auto h = to_angular_delay(generate_channel(cfg, 10 + k, dims), dims);
    round_to_storage(h);
    EXPECT_EQ(ds.samples[static_cast<std::size_t>(k)].values, h.values);
  }
}
