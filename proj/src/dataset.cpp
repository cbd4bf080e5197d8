// SPDX-License-Identifier: Apache-2.0
#include "csifb/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace csifb {

namespace fs = std::filesystem;

namespace {

constexpr const char* kLayout = "row-major [n, R_d, N_b, 2] with last axis = (real, imag)";

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void to_little_endian(std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : data) {
      f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
    }
  }
}

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

void round_to_storage(AngularDelayCsi& h) {
  h.values = h.values.unaryExpr([](const cdouble& z) {
    return cdouble(static_cast<float>(z.real()), static_cast<float>(z.imag()));
  });
}

void Dataset::add(AngularDelayCsi sample) {
  if (sample.rows() != r_d || sample.cols() != n_b) {
    throw DimensionError("dataset '" + name + "': sample shape does not match " +
                         std::to_string(r_d) + "x" + std::to_string(n_b));
  }
  round_to_storage(sample);
  samples.push_back(std::move(sample));
}

Dataset generate_dataset(const ScenarioConfig& cfg, Split split, std::int64_t count,
                         std::int64_t first_index, const ChannelDims& dims) {
  cfg.validate(dims);
  if (count < 0) throw ConfigError("generate_dataset: negative sample count");
  Dataset ds;
  ds.name = cfg.name + "-" + to_string(split);
  ds.split = split;
  ds.scenario = cfg;
  ds.r_d = dims.r_d;
  ds.n_b = dims.n_b;
  ds.samples.resize(static_cast<std::size_t>(count));
  const AngularDelayTransform transform(dims);
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < count; ++k) {
    auto h = transform.to_angular_delay(generate_channel(cfg, first_index + k, dims));
    round_to_storage(h);
    ds.samples[static_cast<std::size_t>(k)] = std::move(h);
  }
  return ds;
}

nlohmann::json to_json(const ScenarioConfig& cfg) {
  return {{"name", cfg.name},
          {"num_paths", cfg.num_paths},
          {"max_delay_bins", cfg.max_delay_bins},
          {"delay_decay", cfg.delay_decay},
          {"pathloss_range_db", cfg.pathloss_range_db},
          {"angle_spread", cfg.angle_spread},
          {"angle_offset", cfg.angle_offset},
          {"delay_offset_bins", cfg.delay_offset_bins},
          {"seed", cfg.seed}};
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  cfg.name = j.value("name", cfg.name);
  cfg.num_paths = j.value("num_paths", cfg.num_paths);
  cfg.max_delay_bins = j.value("max_delay_bins", cfg.max_delay_bins);
  cfg.delay_decay = j.value("delay_decay", cfg.delay_decay);
  cfg.pathloss_range_db = j.value("pathloss_range_db", cfg.pathloss_range_db);
  cfg.angle_spread = j.value("angle_spread", cfg.angle_spread);
  cfg.angle_offset = j.value("angle_offset", cfg.angle_offset);
  cfg.delay_offset_bins = j.value("delay_offset_bins", cfg.delay_offset_bins);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

void write_f32_file(const fs::path& path, const std::vector<float>& data) {
  std::vector<float> le = data;
  to_little_endian(le);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(le.data()),
            static_cast<std::streamsize>(le.size() * sizeof(float)));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<float> read_f32_file(const fs::path& path, std::size_t expected_count) {
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat '" + path.string() + "': " + ec.message());
  if (bytes != expected_count * sizeof(float)) {
    throw FormatError("size mismatch in '" + path.string() + "': expected " +
                      std::to_string(expected_count * sizeof(float)) + " bytes, found " +
                      std::to_string(bytes));
  }
  std::vector<float> data(expected_count);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in && expected_count > 0) throw IoError("read failed for '" + path.string() + "'");
  to_little_endian(data);  // symmetric swap on big-endian hosts
  return data;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const std::size_t per_sample = static_cast<std::size_t>(ds.r_d) * ds.n_b * 2;
  std::vector<float> blob;
  blob.reserve(ds.size() * per_sample);
  for (const auto& h : ds.samples) {
    if (h.rows() != ds.r_d || h.cols() != ds.n_b) {
      throw DimensionError("save_dataset: sample shape differs from dataset shape");
    }
    for (int m = 0; m < ds.r_d; ++m) {
      for (int n = 0; n < ds.n_b; ++n) {
        blob.push_back(static_cast<float>(h.values(m, n).real()));
        blob.push_back(static_cast<float>(h.values(m, n).imag()));
      }
    }
  }

  nlohmann::json manifest = {{"format_version", kDatasetFormatVersion},
                             {"name", ds.name},
                             {"split", to_string(ds.split)},
                             {"n_samples", ds.size()},
                             {"r_d", ds.r_d},
                             {"n_b", ds.n_b},
                             {"dtype", "float32"},
                             {"byte_order", "little-endian"},
                             {"layout", kLayout},
                             {"scenario", to_json(ds.scenario)},
                             {"seed", ds.scenario.seed}};
  if (!ds.provenance.is_null()) manifest["provenance"] = ds.provenance;

  write_f32_file(dir / "data.bin", blob);
  write_json_file(dir / "manifest.json", manifest);
}

Dataset load_dataset(const fs::path& dir) {
  const auto manifest = read_json_file(dir / "manifest.json");
  Dataset ds;
  std::size_t n = 0;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw FormatError("unsupported dataset format_version " + std::to_string(version));
    }
    if (manifest.at("dtype").get<std::string>() != "float32" ||
        manifest.at("byte_order").get<std::string>() != "little-endian") {
      throw FormatError("unsupported dtype/byte_order in '" + dir.string() + "'");
    }
    ds.name = manifest.at("name").get<std::string>();
    ds.split = split_from_string(manifest.at("split").get<std::string>());
    ds.r_d = manifest.at("r_d").get<int>();
    ds.n_b = manifest.at("n_b").get<int>();
    n = manifest.at("n_samples").get<std::size_t>();
    ds.scenario = scenario_from_json(manifest.at("scenario"));
    if (manifest.contains("provenance")) ds.provenance = manifest.at("provenance");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest in '" + dir.string() + "': " + e.what());
  }
  if (ds.r_d < 1 || ds.n_b < 1) throw FormatError("bad manifest: non-positive shape");

  const std::size_t per_sample = static_cast<std::size_t>(ds.r_d) * ds.n_b * 2;
  const auto blob = read_f32_file(dir / "data.bin", n * per_sample);
  ds.samples.reserve(n);
  const float* p = blob.data();
  for (std::size_t k = 0; k < n; ++k) {
    AngularDelayCsi h{CMatrix(ds.r_d, ds.n_b)};
    for (int m = 0; m < ds.r_d; ++m) {
      for (int c = 0; c < ds.n_b; ++c, p += 2) {
        h.values(m, c) = cdouble(p[0], p[1]);
      }
    }
    ds.samples.push_back(std::move(h));
  }
  return ds;
}

}  // namespace csifb
