// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "csifb/dataset.hpp"
#include "csifb/decoder.hpp"

namespace csifb {

/// Adaptive-moment gradient descent over a fixed list of parameter tensors.
template <typename T>
class Adam {
 public:
  Adam(std::vector<std::size_t> sizes, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);

  /// params[k] -= lr * m_hat / (sqrt(v_hat) + eps), tensor by tensor.
  void step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads);

  double learning_rate() const { return lr_; }
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct TrainConfig {
  double gamma = 0.01;
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  bool train_phi = true;  // false reproduces a frozen random measurement matrix
};

struct EpochLog {
  int epoch = 0;
  double loss_total = 0;
  double loss_mse = 0;
  double loss_constraint = 0;
  double val_nmse_db = 0;  // NaN when no validation set was supplied
};

struct AnchorModel {
  DecoderParams<float> params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Jointly trains Phi and every iteration block on `train` (float32).
/// Throws DomainError for an empty dataset and DivergenceError on a non-finite loss.
AnchorModel train_anchor(const Dataset& train, const TrainConfig& cfg, const DecoderShape& shape,
                         const Dataset* validation = nullptr, const EpochCallback& on_epoch = {});

/// Columns: epoch,loss_total,loss_mse,loss_constraint,val_nmse_db
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

/// Deterministic per-epoch minibatch order.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace csifb
