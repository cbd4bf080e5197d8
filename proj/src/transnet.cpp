// SPDX-License-Identifier: Apache-2.0
#include "csifb/transnet.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <random>

#include "csifb/checkpoint.hpp"
#include "csifb/metrics.hpp"
#include "csifb/train.hpp"

namespace csifb {

using kernels::ImageShape;

namespace {

constexpr double kTieTolerance = 1e-12;
constexpr int kCenterTap = 4;

int mod(int a, int n) { return ((a % n) + n) % n; }

// Strictly better than `best` beyond the relative tie tolerance.
bool improves(double cost, double best, bool minimize) {
  const double margin = kTieTolerance * std::max(std::abs(best), std::abs(cost));
  return minimize ? cost < best - margin : cost > best + margin;
}

template <typename T>
Mat<T> column_image(const T* column, ImageShape image) {
  return Eigen::Map<const Mat<T>>(column, 2, image.pixels());
}

void check_plugin(const PluginModel& plugin, const DecoderParams<float>& anchor) {
  auto complete = [](const TranslationNet<float>& net) { return net.bypass || net.layers.size() == 4; };
  if (!complete(plugin.translation) || !complete(plugin.retranslation)) {
    throw ConfigError("plug-in parameters are missing");
  }
  if (plugin.anchor_checksum != parameter_checksum(anchor)) {
    throw ConfigError("plug-in was trained against a different anchor model");
  }
}

template <typename T>
void accumulate(TranslationNet<T>& into, const TranslationNet<T>& from) {
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    into.layers[l].weight += from.layers[l].weight;
    into.layers[l].bias += from.layers[l].bias;
  }
}

std::uint64_t fnv_floats(std::uint64_t h, std::span<const float> values) {
  for (float f : values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) h = (h ^ ((bits >> (8 * b)) & 0xffu)) * 0x100000001b3ULL;
  }
  return h;
}

std::vector<float> flatten(const TranslationNet<float>& net) {
  std::vector<float> blob;
  for (const auto& t : net.tensors()) blob.insert(blob.end(), t.begin(), t.end());
  return blob;
}

}  // namespace

ShiftSteps ShiftSteps::reduced(int i, int j, int r_d, int n_b) {
  if (r_d < 1 || n_b < 1) throw DimensionError("ShiftSteps: empty extent");
  return {mod(i, r_d), mod(j, n_b)};
}

AngularDelayCsi circular_shift(const AngularDelayCsi& h, int i, int j) {
  const int rows = h.rows();
  const int cols = h.cols();
  AngularDelayCsi out{CMatrix(rows, cols)};
  if (rows == 0 || cols == 0) return out;
  const int si = mod(i, rows);
  const int sj = mod(j, cols);
  for (int m = 0; m < rows; ++m) {
    const int src = mod(m - si, rows);
    for (int n = 0; n < cols; ++n) out.values(m, n) = h.values(src, mod(n - sj, cols));
  }
  return out;
}

std::vector<ShiftSteps> search_grid(const ShiftSearchConfig& cfg, int r_d, int n_b) {
  const IntRange di = cfg.delay.count() > 0 ? cfg.delay : IntRange{0, r_d - 1};
  const IntRange aj = cfg.angular.count() > 0 ? cfg.angular : IntRange{0, n_b - 1};
  std::vector<ShiftSteps> grid;
  for (int i = di.lo; i <= di.hi; ++i) {
    for (int j = aj.lo; j <= aj.hi; ++j) grid.push_back(ShiftSteps::reduced(i, j, r_d, n_b));
  }
  std::sort(grid.begin(), grid.end(),
            [](ShiftSteps a, ShiftSteps b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::vector<AngularDelayCsi> search_subset(std::span<const AngularDelayCsi> samples,
                                           const ShiftSearchConfig& cfg) {
  const std::size_t n = samples.size();
  const std::size_t k = cfg.max_samples == 0 ? n : std::min(n, cfg.max_samples);
  std::vector<AngularDelayCsi> out;
  out.reserve(k);
  for (std::size_t s = 0; s < k; ++s) out.push_back(samples[s * n / k]);
  return out;
}

double shift_cost(std::span<const AngularDelayCsi> samples, const DecoderParams<float>& anchor,
                  ShiftSteps steps) {
  std::vector<AngularDelayCsi> shifted;
  shifted.reserve(samples.size());
  for (const auto& h : samples) shifted.push_back(circular_shift(h, steps.i, steps.j));
  const auto rec = reconstruct<float>(shifted, anchor);
  double cost = 0.0;
  for (std::size_t k = 0; k < shifted.size(); ++k) {
    cost += (shifted[k].values - rec[k].values).squaredNorm();
  }
  return cost;
}

namespace {

ShiftSearchResult pick_best(std::vector<ShiftSteps> grid, std::vector<double> costs) {
  ShiftSearchResult out;
  out.best = grid.front();
  out.best_cost = costs.front();
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (improves(costs[g], out.best_cost, true)) {
      out.best = grid[g];
      out.best_cost = costs[g];
    }
  }
  out.grid = std::move(grid);
  out.costs = std::move(costs);
  return out;
}

void check_search_input(std::span<const AngularDelayCsi> samples, const DecoderParams<float>& anchor) {
  if (samples.empty()) throw DomainError("search_shift_steps: no samples");
  for (const auto& h : samples) {
    if (h.rows() != anchor.shape.r_d || h.cols() != anchor.shape.n_b) {
      throw DimensionError("search_shift_steps: sample shape does not match the anchor");
    }
  }
}

}  // namespace

ShiftSearchResult search_shift_steps(std::span<const AngularDelayCsi> samples,
                                     const DecoderParams<float>& anchor,
                                     const ShiftSearchConfig& cfg) {
  check_search_input(samples, anchor);
  const auto subset = search_subset(samples, cfg);
  auto grid = search_grid(cfg, anchor.shape.r_d, anchor.shape.n_b);
  std::vector<double> costs(grid.size());
  const auto points = static_cast<std::int64_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t g = 0; g < points; ++g) {
    costs[static_cast<std::size_t>(g)] = shift_cost(subset, anchor, grid[static_cast<std::size_t>(g)]);
  }
  return pick_best(std::move(grid), std::move(costs));
}

namespace reference {

ShiftSearchResult search_shift_steps(std::span<const AngularDelayCsi> samples,
                                     const DecoderParams<float>& anchor,
                                     const ShiftSearchConfig& cfg) {
  check_search_input(samples, anchor);
  const auto subset = search_subset(samples, cfg);
  auto grid = search_grid(cfg, anchor.shape.r_d, anchor.shape.n_b);
  std::vector<double> costs;
  for (const auto& steps : grid) {
    double cost = 0.0;
    for (const auto& h : subset) {
      const auto shifted = circular_shift(h, steps.i, steps.j);
      const auto est = decode(encode<float>(shifted, anchor.phi), anchor);
      cost += (shifted.values - est.values).squaredNorm();
    }
    costs.push_back(cost);
  }
  return pick_best(std::move(grid), std::move(costs));
}

}  // namespace reference

ShiftSteps cross_correlation_argmax(const Eigen::MatrixXd& map, const Eigen::MatrixXd& ref) {
  if (map.rows() != ref.rows() || map.cols() != ref.cols()) {
    throw DimensionError("cross_correlation_argmax: shape mismatch");
  }
  const int rows = static_cast<int>(map.rows());
  const int cols = static_cast<int>(map.cols());
  if (rows == 0 || cols == 0) throw DomainError("cross_correlation_argmax: empty map");
  ShiftSteps best{0, 0};
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double score = 0.0;
      for (int m = 0; m < rows; ++m) {
        for (int n = 0; n < cols; ++n) score += ref(m, n) * map(mod(m - i, rows), mod(n - j, cols));
      }
      if (std::isinf(best_score) || improves(score, best_score, false)) {
        best = {i, j};
        best_score = score;
      }
    }
  }
  return best;
}

ShiftSteps cross_correlation_shift(std::span<const AngularDelayCsi> samples,
                                   std::span<const AngularDelayCsi> anchor_samples) {
  if (samples.empty() || anchor_samples.empty()) {
    throw DomainError("cross_correlation_shift: empty sample set");
  }
  auto mean_magnitude = [](std::span<const AngularDelayCsi> set) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(set.front().rows(), set.front().cols());
    for (const auto& h : set) {
      if (h.rows() != acc.rows() || h.cols() != acc.cols()) {
        throw DimensionError("cross_correlation_shift: mixed shapes");
      }
      acc += h.values.cwiseAbs();
    }
    return Eigen::MatrixXd(acc / static_cast<double>(set.size()));
  };
  return cross_correlation_argmax(mean_magnitude(samples), mean_magnitude(anchor_samples));
}

// --- translation networks -------------------------------------------------------------------

template <typename T>
std::vector<int> TranslationNet<T>::channel_path(NetKind kind) {
  return kind == NetKind::translation ? std::vector<int>{2, 16, 8, 4, 2}
                                      : std::vector<int>{2, 32, 16, 8, 2};
}

template <typename T>
TranslationNet<T> TranslationNet<T>::zeros(NetKind kind) {
  TranslationNet net;
  net.kind = kind;
  const auto path = channel_path(kind);
  for (std::size_t l = 0; l + 1 < path.size(); ++l) {
    const int in = path[l], out = path[l + 1];
    ConvLayer<T> layer;
    if (kind == NetKind::translation) {
      layer.weight = Mat<T>::Zero(out, in * kernels::kTaps);
    } else {
      layer.weight = Mat<T>::Zero(in, out * kernels::kTaps);
    }
    layer.bias = Vec<T>::Zero(out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <typename T>
TranslationNet<T> TranslationNet<T>::near_identity(NetKind kind, std::uint64_t seed, double noise) {
  auto net = zeros(kind);
  auto tap = [&](std::size_t l, int out, int in) -> T& {
    auto& w = net.layers[l].weight;
    return kind == NetKind::translation ? w(out, in * kernels::kTaps + kCenterTap)
                                        : w(in, out * kernels::kTaps + kCenterTap);
  };
  // [x0, -x0, x1, -x1] survives the ReLUs; the last layer folds the pairs back.
  tap(0, 0, 0) = T(1);
  tap(0, 1, 0) = T(-1);
  tap(0, 2, 1) = T(1);
  tap(0, 3, 1) = T(-1);
  for (std::size_t l = 1; l <= 2; ++l) {
    for (int c = 0; c < 4; ++c) tap(l, c, c) = T(1);
  }
  tap(3, 0, 0) = T(1);
  tap(3, 0, 1) = T(-1);
  tap(3, 1, 2) = T(1);
  tap(3, 1, 3) = T(-1);
  if (noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise);
    for (auto& layer : net.layers) {
      layer.weight = layer.weight.unaryExpr([&](T v) { return v + static_cast<T>(gauss(rng)); });
    }
  }
  return net;
}

template <typename T>
std::size_t TranslationNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

template <typename T>
std::vector<std::span<T>> TranslationNet<T>::tensors() {
  std::vector<std::span<T>> out;
  for (auto& layer : layers) {
    out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> TranslationNet<T>::tensors() const {
  std::vector<std::span<const T>> out;
  for (const auto& layer : layers) {
    out.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return out;
}

template <typename T>
Mat<T> TranslationNet<T>::forward(const Mat<T>& x, ImageShape image) const {
  return NetPass<T>(*this, x, image).output();
}

template <typename T>
template <typename U>
TranslationNet<U> TranslationNet<T>::cast() const {
  TranslationNet<U> out;
  out.kind = kind;
  out.bypass = bypass;
  for (const auto& layer : layers) {
    out.layers.push_back({layer.weight.template cast<U>(), layer.bias.template cast<U>()});
  }
  return out;
}

template <typename T>
NetPass<T>::NetPass(const TranslationNet<T>& net, const Mat<T>& x, ImageShape image)
    : net_(net), image_(image) {
  if (x.rows() != 2 || x.cols() != image.pixels()) {
    throw DimensionError("translation net: expected a 2 x (rows*cols) input");
  }
  if (net.bypass) {
    out_ = x;
    return;
  }
  if (net.layers.empty()) throw ConfigError("translation net has no layers");
  Mat<T> act = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Mat<T> pre;
    if (net.kind == NetKind::translation) {
      kernels::conv3x3_forward(layer.weight, layer.bias, act, image, pre);
    } else {
      kernels::conv3x3_transposed_forward(layer.weight, layer.bias, act, image, pre);
    }
    inputs_.push_back(std::move(act));
    act = l + 1 < net.layers.size() ? Mat<T>(pre.cwiseMax(T(0))) : pre;
    pre_.push_back(std::move(pre));
  }
  out_ = std::move(act);
}

template <typename T>
void NetPass<T>::backward(const Mat<T>& d_output, TranslationNet<T>* grad, Mat<T>* d_input) const {
  if (net_.bypass) {
    if (d_input != nullptr) *d_input = d_output;
    return;
  }
  Mat<T> d = d_output;
  for (std::size_t l = net_.layers.size(); l-- > 0;) {
    if (l + 1 < net_.layers.size()) {
      d = (pre_[l].array() > T(0)).select(d.array(), T(0)).matrix();
    }
    Mat<T>* gw = grad != nullptr ? &grad->layers[l].weight : nullptr;
    Vec<T>* gb = grad != nullptr ? &grad->layers[l].bias : nullptr;
    Mat<T> din;
    Mat<T>* pdin = (l > 0 || d_input != nullptr) ? &din : nullptr;
    if (net_.kind == NetKind::translation) {
      kernels::conv3x3_backward(net_.layers[l].weight, inputs_[l], d, image_, gw, gb, pdin);
    } else {
      kernels::conv3x3_transposed_backward(net_.layers[l].weight, inputs_[l], d, image_, gw, gb, pdin);
    }
    d = std::move(din);
  }
  if (d_input != nullptr) *d_input = std::move(d);
}

namespace {

AngularDelayCsi apply_net(const AngularDelayCsi& h, const TranslationNet<float>& net) {
  const ImageShape image{h.rows(), h.cols()};
  const Vec<float> x = vectorize<float>(h);
  const Mat<float> y = net.forward(column_image(x.data(), image), image);
  const Vec<float> flat = Eigen::Map<const Vec<float>>(y.data(), y.size());
  return devectorize<float>(flat, h.rows(), h.cols());
}

}  // namespace

AngularDelayCsi translate(const AngularDelayCsi& h_sa, const TranslationNet<float>& theta) {
  return apply_net(h_sa, theta);
}

AngularDelayCsi retranslate(const AngularDelayCsi& h, const TranslationNet<float>& omega) {
  return apply_net(h, omega);
}

// --- joint loss -----------------------------------------------------------------------------

template <typename T>
T transnet_loss(const BatchMat<T>& x_true, const DecoderParams<T>& anchor,
                const TranslationNet<T>& tra, const TranslationNet<T>& ret,
                TranslationNet<T>* d_tra, TranslationNet<T>* d_ret) {
  const Eigen::Index batch = x_true.cols();
  if (batch == 0) throw DomainError("transnet_loss: empty batch");
  if (x_true.rows() != anchor.shape.n()) throw DimensionError("transnet_loss: wrong vector length");
  const ImageShape image = anchor.shape.image();
  const bool want_grad = d_tra != nullptr || d_ret != nullptr;
  const int threads = omp_get_max_threads();

  std::vector<std::optional<NetPass<T>>> tra_pass(static_cast<std::size_t>(batch));
  std::vector<T> t_norm(static_cast<std::size_t>(batch));
  BatchMat<T> x_in(x_true.rows(), batch);
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < batch; ++n) {
    auto& pass = tra_pass[static_cast<std::size_t>(n)];
    pass.emplace(tra, column_image(x_true.col(n).data(), image), image);
    const auto& t = pass->output();
    const T norm = t.norm();
    t_norm[static_cast<std::size_t>(n)] = norm;
    const T inv = norm > T(kZeroNormGuard) ? T(1) / norm : T(0);
    x_in.col(n) = Eigen::Map<const Vec<T>>(t.data(), t.size()) * inv;
  }

  const UnfoldingPass<T> unfold(anchor, x_in);
  const BatchMat<T>& dec = unfold.output();
  const T scale = T(1) / static_cast<T>(batch);

  BatchMat<T> d_dec(dec.rows(), batch);
  std::vector<T> sample_loss(static_cast<std::size_t>(batch));
  std::vector<TranslationNet<T>> ret_grads, tra_grads;
  if (d_ret != nullptr) ret_grads.assign(static_cast<std::size_t>(threads), TranslationNet<T>::zeros(ret.kind));
  if (d_tra != nullptr) tra_grads.assign(static_cast<std::size_t>(threads), TranslationNet<T>::zeros(tra.kind));

#pragma omp parallel num_threads(threads)
  {
    TranslationNet<T>* g = d_ret != nullptr ? &ret_grads[static_cast<std::size_t>(omp_get_thread_num())] : nullptr;
#pragma omp for schedule(static)
    for (Eigen::Index n = 0; n < batch; ++n) {
      const NetPass<T> pass(ret, column_image(dec.col(n).data(), image), image);
      const Mat<T> err = pass.output() - column_image(x_true.col(n).data(), image);
      sample_loss[static_cast<std::size_t>(n)] = err.squaredNorm();
      if (want_grad) {
        Mat<T> din;
        pass.backward((T(2) * scale) * err, g, &din);
        d_dec.col(n) = Eigen::Map<const Vec<T>>(din.data(), din.size());
      }
    }
  }
  T loss = 0;
  for (T v : sample_loss) loss += v;
  loss *= scale;
  if (!want_grad) return loss;

  for (const auto& part : ret_grads) accumulate(*d_ret, part);
  if (d_tra == nullptr) return loss;

  BatchMat<T> d_x;
  unfold.backward(d_dec, T(0), nullptr, &d_x);
#pragma omp parallel num_threads(threads)
  {
    TranslationNet<T>* g = &tra_grads[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (Eigen::Index n = 0; n < batch; ++n) {
      const T norm = t_norm[static_cast<std::size_t>(n)];
      if (!(norm > T(kZeroNormGuard))) continue;
      // x = t / ||t||  =>  dt = (dx - x (x . dx)) / ||t||
      const Vec<T> x = x_in.col(n);
      const Vec<T> dx = d_x.col(n);
      const Vec<T> dt = (dx - x * x.dot(dx)) / norm;
      tra_pass[static_cast<std::size_t>(n)]->backward(column_image(dt.data(), image), g, nullptr);
    }
  }
  for (const auto& part : tra_grads) accumulate(*d_tra, part);
  return loss;
}

// --- training and inference ------------------------------------------------------------------

std::vector<AngularDelayCsi> feedback_new_scenario(std::span<const AngularDelayCsi> channels,
                                                   const PluginModel& plugin,
                                                   const DecoderParams<float>& anchor) {
  check_plugin(plugin, anchor);
  const auto& shape = anchor.shape;
  const ImageShape image = shape.image();
  for (const auto& h : channels) {
    if (h.rows() != shape.r_d || h.cols() != shape.n_b) {
      throw DimensionError("feedback_new_scenario: sample shape does not match the anchor");
    }
  }
  constexpr std::size_t kChunk = 256;
  std::vector<AngularDelayCsi> out(channels.size());
  for (std::size_t start = 0; start < channels.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, channels.size() - start);
    BatchMat<float> x(shape.n(), static_cast<Eigen::Index>(count));
    std::vector<double> power(count);
    const auto cnt = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < cnt; ++k) {
      const auto& h = channels[start + static_cast<std::size_t>(k)];
      const auto parts = spherical_split(circular_shift(h, plugin.steps.i, plugin.steps.j));
      power[static_cast<std::size_t>(k)] = parts.power;
      const Vec<float> u = vectorize<float>(parts.unit);
      if (plugin.translation.bypass) {
        x.col(k) = u;
        continue;
      }
      const Mat<float> t = plugin.translation.forward(column_image(u.data(), image), image);
      const float norm = t.norm();
      const float inv = norm > static_cast<float>(kZeroNormGuard) ? 1.0f / norm : 0.0f;
      x.col(k) = Eigen::Map<const Vec<float>>(t.data(), t.size()) * inv;
    }
    const BatchMat<float> y = anchor.phi.phi * x;
    const BatchMat<float> dec = decode_unit_batch(y, anchor);
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < cnt; ++k) {
      const Mat<float> r = plugin.retranslation.forward(column_image(dec.col(k).data(), image), image);
      const Vec<float> flat = Eigen::Map<const Vec<float>>(r.data(), r.size());
      const auto est = spherical_merge(power[static_cast<std::size_t>(k)],
                                       devectorize<float>(flat, shape.r_d, shape.n_b));
      out[start + static_cast<std::size_t>(k)] = circular_shift(est, -plugin.steps.i, -plugin.steps.j);
    }
  }
  return out;
}

AngularDelayCsi feedback_new_scenario(const AngularDelayCsi& h, const PluginModel& plugin,
                                      const DecoderParams<float>& anchor) {
  return feedback_new_scenario(std::span<const AngularDelayCsi>(&h, 1), plugin, anchor).front();
}

std::vector<AngularDelayCsi> align_only_feedback(std::span<const AngularDelayCsi> channels,
                                                 ShiftSteps steps,
                                                 const DecoderParams<float>& anchor) {
  std::vector<AngularDelayCsi> shifted;
  shifted.reserve(channels.size());
  for (const auto& h : channels) shifted.push_back(circular_shift(h, steps.i, steps.j));
  auto rec = reconstruct<float>(shifted, anchor);
  for (auto& h : rec) h = circular_shift(h, -steps.i, -steps.j);
  return rec;
}

TransnetModel train_transnet(const Dataset& new_ds, const DecoderParams<float>& anchor,
                             ShiftSteps steps, const TransTrainConfig& cfg,
                             const Dataset* validation,
                             const std::function<void(const TransEpochLog&)>& on_epoch) {
  if (new_ds.empty()) throw DomainError("train_transnet: empty dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("train_transnet: bad batch/epochs");
  if (new_ds.r_d != anchor.shape.r_d || new_ds.n_b != anchor.shape.n_b) {
    throw DimensionError("train_transnet: dataset shape does not match the anchor");
  }
  steps = ShiftSteps::reduced(steps.i, steps.j, anchor.shape.r_d, anchor.shape.n_b);

  std::vector<AngularDelayCsi> aligned;
  aligned.reserve(new_ds.size());
  for (const auto& h : new_ds.samples) aligned.push_back(circular_shift(h, steps.i, steps.j));
  const BatchMat<float> all = unit_batch<float>(aligned);

  TransnetModel model;
  auto& plugin = model.plugin;
  plugin.steps = steps;
  plugin.scenario = new_ds.scenario.name;
  plugin.anchor_checksum = parameter_checksum(anchor);
  plugin.translation = TranslationNet<float>::near_identity(
      NetKind::translation, derive_seed(cfg.seed, "translation"), cfg.init_noise);
  plugin.retranslation = TranslationNet<float>::near_identity(
      NetKind::retranslation, derive_seed(cfg.seed, "retranslation"), cfg.init_noise);

  auto params = [&plugin]() {
    auto a = plugin.translation.tensors();
    auto b = plugin.retranslation.tensors();
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  std::vector<std::size_t> sizes;
  for (const auto& s : params()) sizes.push_back(s.size());
  Adam<float> adam(sizes, cfg.learning_rate);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(all.cols(), derive_seed(cfg.seed, "shuffle"), epoch);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      BatchMat<float> batch(all.rows(), static_cast<Eigen::Index>(count));
      for (std::size_t k = 0; k < count; ++k) {
        batch.col(static_cast<Eigen::Index>(k)) = all.col(static_cast<Eigen::Index>(order[start + k]));
      }
      auto g_tra = TranslationNet<float>::zeros(NetKind::translation);
      auto g_ret = TranslationNet<float>::zeros(NetKind::retranslation);
      const float loss =
          transnet_loss(batch, anchor, plugin.translation, plugin.retranslation, &g_tra, &g_ret);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train_transnet: non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      }
      auto grads = std::as_const(g_tra).tensors();
      const auto gr = std::as_const(g_ret).tensors();
      grads.insert(grads.end(), gr.begin(), gr.end());
      adam.step(params(), grads);
      sum += static_cast<double>(loss) * static_cast<double>(count);
    }
    TransEpochLog entry{epoch, sum / static_cast<double>(all.cols()),
                        std::numeric_limits<double>::quiet_NaN()};
    if (validation != nullptr && !validation->empty()) {
      entry.val_nmse_db = to_db(nmse(validation->samples,
                                     feedback_new_scenario(validation->samples, plugin, anchor)));
    }
    model.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return model;
}

// --- plug-in checkpoint ---------------------------------------------------------------------

void save_plugin(const PluginModel& plugin, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const auto tra = flatten(plugin.translation);
  const auto ret = flatten(plugin.retranslation);
  const std::uint64_t checksum = fnv_floats(fnv_floats(0xcbf29ce484222325ULL, tra), ret);
  const nlohmann::json manifest = {
      {"format_version", kPluginFormatVersion},
      {"kind", "transnet-plugin"},
      {"scenario", plugin.scenario},
      {"steps", {{"i", plugin.steps.i}, {"j", plugin.steps.j}}},
      {"anchor_checksum", plugin.anchor_checksum},
      {"translation_parameters", tra.size()},
      {"retranslation_parameters", ret.size()},
      {"translation_bypass", plugin.translation.bypass},
      {"retranslation_bypass", plugin.retranslation.bypass},
      {"dtype", "float32"},
      {"byte_order", "little-endian"},
      {"checksum", checksum},
      {"order", "per layer: weight (row-major), bias"}};
  write_f32_file(dir / "translation.bin", tra);
  write_f32_file(dir / "retranslation.bin", ret);
  write_json_file(dir / "manifest.json", manifest);
}

PluginModel load_plugin(const std::filesystem::path& dir) {
  const auto manifest = read_json_file(dir / "manifest.json");
  PluginModel plugin;
  std::uint64_t checksum = 0;
  try {
    if (manifest.at("format_version").get<int>() != kPluginFormatVersion) {
      throw FormatError("unsupported plug-in format_version");
    }
    plugin.scenario = manifest.value("scenario", std::string{});
    plugin.steps = {manifest.at("steps").at("i").get<int>(), manifest.at("steps").at("j").get<int>()};
    plugin.anchor_checksum = manifest.at("anchor_checksum").get<std::uint64_t>();
    checksum = manifest.at("checksum").get<std::uint64_t>();
    plugin.translation = TranslationNet<float>::zeros(NetKind::translation);
    plugin.retranslation = TranslationNet<float>::zeros(NetKind::retranslation);
    plugin.translation.bypass = manifest.value("translation_bypass", false);
    plugin.retranslation.bypass = manifest.value("retranslation_bypass", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad plug-in manifest in '" + dir.string() + "': " + e.what());
  }
  auto fill = [](TranslationNet<float>& net, const std::vector<float>& blob) {
    const float* p = blob.data();
    for (auto t : net.tensors()) {
      std::memcpy(t.data(), p, t.size() * sizeof(float));
      p += t.size();
    }
  };
  const auto tra = read_f32_file(dir / "translation.bin", plugin.translation.parameter_count());
  const auto ret = read_f32_file(dir / "retranslation.bin", plugin.retranslation.parameter_count());
  if (fnv_floats(fnv_floats(0xcbf29ce484222325ULL, tra), ret) != checksum) {
    throw FormatError("plug-in checksum mismatch in '" + dir.string() + "'");
  }
  fill(plugin.translation, tra);
  fill(plugin.retranslation, ret);
  return plugin;
}

template struct TranslationNet<float>;
template struct TranslationNet<double>;
template class NetPass<float>;
template class NetPass<double>;
template TranslationNet<double> TranslationNet<float>::cast<double>() const;
template TranslationNet<float> TranslationNet<double>::cast<float>() const;
template float transnet_loss<float>(const BatchMat<float>&, const DecoderParams<float>&,
                                    const TranslationNet<float>&, const TranslationNet<float>&,
                                    TranslationNet<float>*, TranslationNet<float>*);
template double transnet_loss<double>(const BatchMat<double>&, const DecoderParams<double>&,
                                      const TranslationNet<double>&, const TranslationNet<double>&,
                                      TranslationNet<double>*, TranslationNet<double>*);

}  // namespace csifb
