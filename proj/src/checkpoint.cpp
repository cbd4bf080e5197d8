// SPDX-License-Identifier: Apache-2.0
#include "csifb/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "csifb/dataset.hpp"

namespace csifb {

namespace fs = std::filesystem;

namespace {

std::vector<float> flatten(const DecoderParams<float>& params) {
  std::vector<float> blob;
  blob.reserve(params.parameter_count());
  for (const auto& t : params.tensors()) blob.insert(blob.end(), t.begin(), t.end());
  return blob;
}

}  // namespace

std::uint64_t parameter_checksum(const DecoderParams<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : params.tensors()) {
    for (float f : t) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) {
        h = (h ^ ((bits >> (8 * b)) & 0xffu)) * 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void save_checkpoint(const DecoderParams<float>& params, const CheckpointInfo& info,
                     const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const auto& s = params.shape;
  nlohmann::json manifest = {
      {"format_version", kCheckpointFormatVersion},
      {"kind", "unfolded-ista-decoder"},
      {"r_d", s.r_d},
      {"n_b", s.n_b},
      {"channels", s.channels},
      {"n_iter", s.n_iter},
      {"measurements", s.measurements},
      {"cr", s.cr},
      {"phi_trainable", params.phi.trainable},
      {"seed", info.seed},
      {"epoch", info.epoch},
      {"scenario", info.scenario},
      {"dtype", "float32"},
      {"byte_order", "little-endian"},
      {"parameter_count", params.parameter_count()},
      {"checksum", parameter_checksum(params)},
      {"order",
       "phi[L_y,N]; per block: rho, theta_raw, m[C,2*9], h1[C,C*9], h2[C,C*9], ht1[C,C*9], "
       "ht2[C,C*9], b[2,C*9]; all row-major"}};
  write_f32_file(dir / "params.bin", flatten(params));
  write_json_file(dir / "manifest.json", manifest);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const auto manifest = read_json_file(dir / "manifest.json");
  DecoderShape shape;
  LoadedCheckpoint out;
  bool trainable = true;
  std::uint64_t checksum = 0;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint format_version " + std::to_string(version));
    }
    shape.r_d = manifest.at("r_d").get<int>();
    shape.n_b = manifest.at("n_b").get<int>();
    shape.channels = manifest.at("channels").get<int>();
    shape.n_iter = manifest.at("n_iter").get<int>();
    shape.measurements = manifest.at("measurements").get<int>();
    shape.cr = manifest.at("cr").get<double>();
    trainable = manifest.value("phi_trainable", true);
    out.info.seed = manifest.value("seed", std::uint64_t{0});
    out.info.epoch = manifest.value("epoch", 0);
    out.info.scenario = manifest.value("scenario", std::string{});
    checksum = manifest.at("checksum").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest in '" + dir.string() + "': " + e.what());
  }
  try {
    shape.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint shape: ") + e.what());
  }
  out.params = DecoderParams<float>::zeros(shape);
  out.params.phi.trainable = trainable;
  const auto blob = read_f32_file(dir / "params.bin", out.params.parameter_count());
  const float* p = blob.data();
  for (auto t : out.params.tensors()) {
    std::memcpy(t.data(), p, t.size() * sizeof(float));
    p += t.size();
  }
  if (parameter_checksum(out.params) != checksum) {
    throw FormatError("checkpoint checksum mismatch in '" + dir.string() + "'");
  }
  return out;
}

}  // namespace csifb
