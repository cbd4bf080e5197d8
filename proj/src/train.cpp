// SPDX-License-Identifier: Apache-2.0
#include "csifb/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "csifb/metrics.hpp"

namespace csifb {

template <typename T>
Adam<T>::Adam(std::vector<std::size_t> sizes, double learning_rate, double beta1, double beta2,
              double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (auto n : sizes) {
    m_.emplace_back(n, T(0));
    v_.emplace_back(n, T(0));
  }
}

template <typename T>
void Adam<T>::step(const std::vector<std::span<T>>& params,
                   const std::vector<std::span<const T>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("Adam::step: tensor count changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T step = static_cast<T>(lr_ * std::sqrt(c2) / c1);
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T eps = static_cast<T>(eps_ * std::sqrt(c2));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = m_[k];
    auto& v = v_[k];
    const auto p = params[k];
    const auto g = grads[k];
    if (p.size() != m.size() || g.size() != m.size()) {
      throw DimensionError("Adam::step: tensor size changed");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

AnchorModel train_anchor(const Dataset& train, const TrainConfig& cfg, const DecoderShape& shape,
                         const Dataset* validation, const EpochCallback& on_epoch) {
  if (train.empty()) throw DomainError("train_anchor: empty training set");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("train_anchor: bad batch/epochs");
  if (cfg.gamma < 0.0) throw ConfigError("train_anchor: gamma must be nonnegative");
  if (train.r_d != shape.r_d || train.n_b != shape.n_b) {
    throw DimensionError("train_anchor: dataset shape does not match decoder shape");
  }

  AnchorModel model{DecoderParams<float>::initialize(shape, derive_seed(cfg.seed, "init")), {}};
  model.params.phi.trainable = cfg.train_phi;

  const BatchMat<float> all = unit_batch<float>(train.samples);
  std::vector<std::size_t> sizes;
  for (const auto& s : model.params.tensors()) sizes.push_back(s.size());
  Adam<float> adam(sizes, cfg.learning_rate);
  auto grad = DecoderParams<float>::zeros(shape);
  const auto gamma = static_cast<float>(cfg.gamma);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), derive_seed(cfg.seed, "shuffle"), epoch);
    double sum_total = 0, sum_mse = 0, sum_con = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      BatchMat<float> batch(all.rows(), static_cast<Eigen::Index>(count));
      for (std::size_t k = 0; k < count; ++k) {
        batch.col(static_cast<Eigen::Index>(k)) = all.col(static_cast<Eigen::Index>(order[start + k]));
      }
      for (auto s : grad.tensors()) std::fill(s.begin(), s.end(), 0.0f);
      const auto loss = loss_and_gradient(batch, model.params, gamma, grad);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("train_anchor: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start) +
                              " (mse=" + std::to_string(loss.mse) + ")");
      }
      adam.step(model.params.tensors(), std::as_const(grad).tensors());
      sum_total += loss.total * static_cast<double>(count);
      sum_mse += loss.mse * static_cast<double>(count);
      sum_con += loss.constraint * static_cast<double>(count);
    }
    const double n = static_cast<double>(train.size());
    EpochLog entry{epoch, sum_total / n, sum_mse / n, sum_con / n,
                   std::numeric_limits<double>::quiet_NaN()};
    if (validation != nullptr && !validation->empty()) {
      const auto est = reconstruct<float>(validation->samples, model.params);
      entry.val_nmse_db = to_db(nmse(validation->samples, est));
    }
    model.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return model;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "epoch,loss_total,loss_mse,loss_constraint,val_nmse_db\n";
  out.precision(9);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.loss_total << ',' << e.loss_mse << ',' << e.loss_constraint << ',';
    if (std::isnan(e.val_nmse_db)) {
      out << "nan";
    } else {
      out << e.val_nmse_db;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace csifb
