// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "csifb/augment.hpp"
#include "csifb/dataset.hpp"
#include "csifb/decoder.hpp"

namespace csifb {

/// Circular shift steps, always reduced to [0, R_d) x [0, N_b).
struct ShiftSteps {
  int i = 0;
  int j = 0;

  static ShiftSteps reduced(int i, int j, int r_d, int n_b);
  bool operator==(const ShiftSteps&) const = default;
};

/// out[m, n] = H[(m - i) mod R_d, (n - j) mod N_b]
AngularDelayCsi circular_shift(const AngularDelayCsi& h, int i, int j);

struct ShiftSearchConfig {
  IntRange delay{0, -1};    // empty range means the full [0, R_d)
  IntRange angular{0, -1};  // empty range means the full [0, N_b)
  std::size_t max_samples = 64;
};

/// Grid points of `cfg` reduced modulo (r_d, n_b), deduplicated, lexicographically sorted.
std::vector<ShiftSteps> search_grid(const ShiftSearchConfig& cfg, int r_d, int n_b);

/// Evenly spaced subset of at most cfg.max_samples items (all of them when fewer).
std::vector<AngularDelayCsi> search_subset(std::span<const AngularDelayCsi> samples,
                                           const ShiftSearchConfig& cfg);

/// Sum over samples of ||f_sh(H) - decode(encode(f_sh(H)))||_F^2 at one grid point.
double shift_cost(std::span<const AngularDelayCsi> samples, const DecoderParams<float>& anchor,
                  ShiftSteps steps);

struct ShiftSearchResult {
  ShiftSteps best;
  double best_cost = 0;
  std::vector<ShiftSteps> grid;
  std::vector<double> costs;  // aligned with grid
};

/// Exhaustive argmin of shift_cost over the grid, parallel over grid points.
/// Ties (relative 1e-12) go to the lexicographically smallest (i, j). Throws DomainError on
/// empty samples.
ShiftSearchResult search_shift_steps(std::span<const AngularDelayCsi> samples,
                                     const DecoderParams<float>& anchor,
                                     const ShiftSearchConfig& cfg = {});

/// Direct cross-correlation of magnitude maps as a cheap stand-in for the search: the returned
/// steps shift the mean |H| of `samples` onto the mean |H| of `anchor_samples`.
ShiftSteps cross_correlation_shift(std::span<const AngularDelayCsi> samples,
                                   std::span<const AngularDelayCsi> anchor_samples);

/// Argmax of sum_{m,n} ref[m,n] * shifted(map, i, j)[m,n] with the same tie-break.
ShiftSteps cross_correlation_argmax(const Eigen::MatrixXd& map, const Eigen::MatrixXd& ref);

namespace reference {

/// One sample and one grid point at a time, no parallelism.
ShiftSearchResult search_shift_steps(std::span<const AngularDelayCsi> samples,
                                     const DecoderParams<float>& anchor,
                                     const ShiftSearchConfig& cfg = {});

}  // namespace reference

enum class NetKind { translation, retranslation };

template <typename T>
struct ConvLayer {
  Mat<T> weight;  // conv: out x in*9; transposed conv: in x out*9
  Vec<T> bias;    // out
};

/// Four 3x3 layers with bias and ReLU after the first three. Translation uses plain convs with
/// feature maps 2-16-8-4-2, retranslation uses transposed convs with 2-32-16-8-2.
template <typename T>
struct TranslationNet {
  NetKind kind = NetKind::translation;
  std::vector<ConvLayer<T>> layers;
  bool bypass = false;  // diagnostic: forward is the identity

  static std::vector<int> channel_path(NetKind kind);
  static TranslationNet zeros(NetKind kind);
  /// Kernels that reproduce the input exactly (x = relu(x) - relu(-x) through the ReLUs), plus
  /// N(0, noise^2) perturbations. Biases start at zero.
  static TranslationNet near_identity(NetKind kind, std::uint64_t seed, double noise = 1e-2);

  std::size_t parameter_count() const;
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;
  bool empty() const { return layers.empty(); }

  /// x is a 2 x (rows*cols) feature map.
  Mat<T> forward(const Mat<T>& x, kernels::ImageShape image) const;

  template <typename U>
  TranslationNet<U> cast() const;
};

/// Forward pass that keeps what backward needs.
template <typename T>
class NetPass {
 public:
  NetPass(const TranslationNet<T>& net, const Mat<T>& x, kernels::ImageShape image);
  const Mat<T>& output() const { return out_; }
  /// Accumulates parameter gradients into `grad` (when non-null) and writes dL/dx into `d_input`
  /// (when non-null).
  void backward(const Mat<T>& d_output, TranslationNet<T>* grad, Mat<T>* d_input) const;

 private:
  const TranslationNet<T>& net_;
  kernels::ImageShape image_;
  std::vector<Mat<T>> inputs_;  // input of each layer
  std::vector<Mat<T>> pre_;     // pre-activation of each layer
  Mat<T> out_;
};

AngularDelayCsi translate(const AngularDelayCsi& h_sa, const TranslationNet<float>& theta);
AngularDelayCsi retranslate(const AngularDelayCsi& h, const TranslationNet<float>& omega);

/// Plug-in pair for one new scenario.
struct PluginModel {
  ShiftSteps steps;
  TranslationNet<float> translation;
  TranslationNet<float> retranslation;
  std::uint64_t anchor_checksum = 0;
  std::string scenario;
};

/// Per-sample sum of ||U - f_ret(D(Phi f_tra(U) / ||f_tra(U)||))||^2 over the unit-norm batch
/// columns of `x_true`, divided by the batch size. Gradients for both nets are accumulated when
/// the pointers are non-null; the anchor is only read.
template <typename T>
T transnet_loss(const BatchMat<T>& x_true, const DecoderParams<T>& anchor,
                const TranslationNet<T>& tra, const TranslationNet<T>& ret,
                TranslationNet<T>* d_tra = nullptr, TranslationNet<T>* d_ret = nullptr);

struct TransTrainConfig {
  int epochs = 80;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double init_noise = 1e-2;
  std::uint64_t seed = 1;
};

struct TransEpochLog {
  int epoch = 0;
  double loss = 0;
  double val_nmse_db = 0;  // NaN without validation data
};

struct TransnetModel {
  PluginModel plugin;
  std::vector<TransEpochLog> log;
};

/// Trains only the plug-in nets on circular_shift(new_ds, steps); the anchor is untouched.
/// Throws DomainError on an empty dataset and DivergenceError on a non-finite loss.
TransnetModel train_transnet(const Dataset& new_ds, const DecoderParams<float>& anchor,
                             ShiftSteps steps, const TransTrainConfig& cfg,
                             const Dataset* validation = nullptr,
                             const std::function<void(const TransEpochLog&)>& on_epoch = {});

/// dealign(p * f_ret(decode(encode(f_tra(U))))) with (p, U) the spherical split of align(H).
/// Throws ConfigError when the plug-in is incomplete or was trained against another anchor.
AngularDelayCsi feedback_new_scenario(const AngularDelayCsi& h, const PluginModel& plugin,
                                      const DecoderParams<float>& anchor);
std::vector<AngularDelayCsi> feedback_new_scenario(std::span<const AngularDelayCsi> channels,
                                                   const PluginModel& plugin,
                                                   const DecoderParams<float>& anchor);

/// Shift-only adaptation: dealign(decode(encode(align(H)))).
std::vector<AngularDelayCsi> align_only_feedback(std::span<const AngularDelayCsi> channels,
                                                 ShiftSteps steps,
                                                 const DecoderParams<float>& anchor);

inline constexpr int kPluginFormatVersion = 1;

/// manifest.json + translation.bin + retranslation.bin (float32 little-endian, layer by layer,
/// weight then bias).
void save_plugin(const PluginModel& plugin, const std::filesystem::path& dir);
PluginModel load_plugin(const std::filesystem::path& dir);

}  // namespace csifb
