// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csifb/channel.hpp"

namespace csifb {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Named collection of angular-delay samples from one scenario.
///
/// Samples are held at float32 precision (the on-disk precision), so that a
/// save/load roundtrip is bit-exact. Use `add` or `round_to_storage` when
/// inserting computed samples.
struct Dataset {
  std::string name;
  Split split = Split::train;
  ScenarioConfig scenario;
  int r_d = 32;
  int n_b = 32;
  std::vector<AngularDelayCsi> samples;
  nlohmann::json provenance;  // null unless derived (e.g. augmentation echo)

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Appends a sample after rounding it to storage precision. Throws DimensionError on shape mismatch.
  void add(AngularDelayCsi sample);
};

/// Rounds every entry to the nearest float32.
void round_to_storage(AngularDelayCsi& h);

/// Generates `count` samples (indices first_index .. first_index+count-1) in parallel.
Dataset generate_dataset(const ScenarioConfig& cfg, Split split, std::int64_t count,
                         std::int64_t first_index = 0, const ChannelDims& dims = {});

inline constexpr int kDatasetFormatVersion = 1;

/// Writes `dir/manifest.json` and `dir/data.bin` (row-major [n, R_d, N_b, 2] float32 LE).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

/// Raw little-endian float32 file helpers shared by the dataset and checkpoint writers.
void write_f32_file(const std::filesystem::path& path, const std::vector<float>& data);
std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected_count);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace csifb
