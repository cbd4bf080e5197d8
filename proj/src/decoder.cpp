// SPDX-License-Identifier: Apache-2.0
#include "csifb/decoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include <omp.h>

namespace csifb {

namespace {

using kernels::ImageShape;

template <typename T>
const Vec<T>& no_bias() {
  static const Vec<T> empty;
  return empty;
}

template <typename T>
Mat<T> relu(const Mat<T>& x) {
  return x.cwiseMax(T(0));
}

template <typename T>
Mat<T> relu_grad(const Mat<T>& pre, const Mat<T>& d) {
  return (pre.array() > T(0)).select(d.array(), T(0)).matrix();
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Mat<T> xavier(int out_channels, int in_channels, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_channels) * kernels::kTaps;
  const double fan_out = static_cast<double>(out_channels) * kernels::kTaps;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
  Mat<T> w(out_channels, in_channels * kernels::kTaps);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<T>(dist(rng));
  return w;
}

template <typename T>
IterationBlockParams<T> zero_block(const DecoderShape& s) {
  const int c = s.channels;
  IterationBlockParams<T> b;
  b.rho = 0;
  b.theta_raw = 0;
  b.m = Mat<T>::Zero(c, 2 * kernels::kTaps);
  b.h1 = Mat<T>::Zero(c, c * kernels::kTaps);
  b.h2 = Mat<T>::Zero(c, c * kernels::kTaps);
  b.ht1 = Mat<T>::Zero(c, c * kernels::kTaps);
  b.ht2 = Mat<T>::Zero(c, c * kernels::kTaps);
  b.b = Mat<T>::Zero(2, c * kernels::kTaps);
  return b;
}

template <typename T>
void accumulate(IterationBlockParams<T>& into, const IterationBlockParams<T>& from) {
  into.rho += from.rho;
  into.theta_raw += from.theta_raw;
  into.m += from.m;
  into.h1 += from.h1;
  into.h2 += from.h2;
  into.ht1 += from.ht1;
  into.ht2 += from.ht2;
  into.b += from.b;
}

template <typename T>
Mat<T> as_image(const T* column, ImageShape image) {
  return Eigen::Map<const Mat<T>>(column, 2, image.pixels());
}

// Residual refinement without keeping intermediates.
template <typename T>
void prox_inplace(T* column, const IterationBlockParams<T>& p, ImageShape image) {
  const Mat<T> img = as_image(column, image);
  Mat<T> m, a, h, g, out;
  kernels::conv3x3_forward(p.m, no_bias<T>(), img, image, m);
  kernels::conv3x3_forward(p.h1, no_bias<T>(), m, image, a);
  kernels::conv3x3_forward(p.h2, no_bias<T>(), relu(a), image, h);
  kernels::conv3x3_forward(p.ht1, no_bias<T>(), soft(h, p.theta()), image, a);
  kernels::conv3x3_forward(p.ht2, no_bias<T>(), relu(a), image, g);
  kernels::conv3x3_forward(p.b, no_bias<T>(), g, image, out);
  Eigen::Map<Mat<T>>(column, 2, image.pixels()) += out;
}

template <typename T>
void check_batch(const DecoderParams<T>& params, Eigen::Index rows, Eigen::Index expected,
                 const char* what) {
  if (rows != expected) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) +
                         " rows, got " + std::to_string(rows));
  }
  (void)params;
}

}  // namespace

DecoderShape DecoderShape::for_ratio(double cr, int r_d, int n_b, int channels, int n_iter) {
  DecoderShape s;
  s.r_d = r_d;
  s.n_b = n_b;
  s.channels = channels;
  s.n_iter = n_iter;
  s.cr = cr;
  s.measurements = measurement_length(cr, 2 * r_d * n_b);
  s.validate();
  return s;
}

void DecoderShape::validate() const {
  if (r_d < 1 || n_b < 1) throw ConfigError("decoder: image dimensions must be positive");
  if (channels < 1) throw ConfigError("decoder: channel count must be positive");
  if (n_iter < 0) throw ConfigError("decoder: iteration count must be nonnegative");
  if (measurements < 1 || measurements > n()) {
    throw ConfigError("decoder: measurement count must lie in [1, N]");
  }
}

template <typename T>
T softplus(T v) {
  if (v > T(30)) return v;
  return std::log1p(std::exp(v));
}

template <typename T>
DecoderParams<T> DecoderParams<T>::initialize(const DecoderShape& shape, std::uint64_t seed) {
  shape.validate();
  DecoderParams<T> p;
  p.shape = shape;
  p.phi = MeasurementMatrix<T>::gaussian(shape.measurements, shape.n(), derive_seed(seed, "phi"));
  std::mt19937_64 rng(derive_seed(seed, "kernels"));
  const int c = shape.channels;
  const T theta_raw = static_cast<T>(std::log(std::expm1(0.01)));
  for (int k = 0; k < shape.n_iter; ++k) {
    IterationBlockParams<T> b;
    b.rho = T(0.5);
    b.theta_raw = theta_raw;
    b.m = xavier<T>(c, 2, rng);
    b.h1 = xavier<T>(c, c, rng);
    b.h2 = xavier<T>(c, c, rng);
    b.ht1 = xavier<T>(c, c, rng);
    b.ht2 = xavier<T>(c, c, rng);
    b.b = xavier<T>(2, c, rng);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

template <typename T>
DecoderParams<T> DecoderParams<T>::zeros(const DecoderShape& shape) {
  DecoderParams<T> p;
  p.shape = shape;
  p.phi.phi = Mat<T>::Zero(shape.measurements, shape.n());
  p.blocks.assign(static_cast<std::size_t>(shape.n_iter), zero_block<T>(shape));
  return p;
}

template <typename T>
std::vector<std::span<T>> DecoderParams<T>::tensors() {
  std::vector<std::span<T>> out;
  auto add = [&out](Mat<T>& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  add(phi.phi);
  for (auto& b : blocks) {
    out.emplace_back(&b.rho, 1);
    out.emplace_back(&b.theta_raw, 1);
    add(b.m);
    add(b.h1);
    add(b.h2);
    add(b.ht1);
    add(b.ht2);
    add(b.b);
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> DecoderParams<T>::tensors() const {
  auto spans = const_cast<DecoderParams<T>*>(this)->tensors();
  return {spans.begin(), spans.end()};
}

template <typename T>
std::size_t DecoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : tensors()) n += s.size();
  return n;
}

template <typename T>
template <typename U>
DecoderParams<U> DecoderParams<T>::cast() const {
  DecoderParams<U> out;
  out.shape = shape;
  out.phi.phi = phi.phi.template cast<U>();
  out.phi.trainable = phi.trainable;
  for (const auto& b : blocks) {
    IterationBlockParams<U> c;
    c.rho = static_cast<U>(b.rho);
    c.theta_raw = static_cast<U>(b.theta_raw);
    c.m = b.m.template cast<U>();
    c.h1 = b.h1.template cast<U>();
    c.h2 = b.h2.template cast<U>();
    c.ht1 = b.ht1.template cast<U>();
    c.ht2 = b.ht2.template cast<U>();
    c.b = b.b.template cast<U>();
    out.blocks.push_back(std::move(c));
  }
  return out;
}

template <typename T>
Vec<T> gradient_step(const Vec<T>& x_prev, const Vec<T>& y, const Mat<T>& phi, T rho) {
  if (phi.cols() != x_prev.size() || phi.rows() != y.size()) {
    throw DimensionError("gradient_step: Phi is " + std::to_string(phi.rows()) + "x" +
                         std::to_string(phi.cols()) + ", x has " + std::to_string(x_prev.size()) +
                         ", y has " + std::to_string(y.size()));
  }
  const Vec<T> residual = phi * x_prev - y;
  return x_prev - rho * (phi.transpose() * residual);
}

template <typename T>
Vec<T> proximal_block(const Vec<T>& r, const IterationBlockParams<T>& block,
                      kernels::ImageShape image) {
  if (r.size() != 2 * image.pixels()) throw DimensionError("proximal_block: vector/image mismatch");
  Vec<T> x = r;
  prox_inplace(x.data(), block, image);
  return x;
}

template <typename T>
BatchMat<T> decode_unit_batch(const BatchMat<T>& y, const DecoderParams<T>& params) {
  const auto& phi = params.phi.phi;
  check_batch(params, y.rows(), phi.rows(), "decode");
  const auto image = params.shape.image();
  BatchMat<T> x = phi.transpose() * y;
  for (const auto& block : params.blocks) {
    BatchMat<T> u = phi * x - y;
    x.noalias() -= block.rho * (phi.transpose() * u);
    const Eigen::Index batch = x.cols();
#pragma omp parallel for schedule(static)
    for (Eigen::Index n = 0; n < batch; ++n) {
      prox_inplace(x.col(n).data(), block, image);
    }
  }
  return x;
}

template <typename T>
AngularDelayCsi decode(const Codeword<T>& c, const DecoderParams<T>& params) {
  if (c.power < T(0)) throw DomainError("decode: negative power");
  const BatchMat<T> y = c.y;
  const BatchMat<T> x = decode_unit_batch(y, params);
  const Vec<T> col = x.col(0);
  return spherical_merge(static_cast<double>(c.power),
                         devectorize<T>(col, params.shape.r_d, params.shape.n_b));
}

template <typename T>
BatchMat<T> unit_batch(std::span<const AngularDelayCsi> channels) {
  if (channels.empty()) return {};
  const Eigen::Index n = 2 * channels.front().values.size();
  BatchMat<T> x(n, static_cast<Eigen::Index>(channels.size()));
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (2 * channels[k].values.size() != n) throw DimensionError("unit_batch: mixed shapes");
    x.col(static_cast<Eigen::Index>(k)) = vectorize<T>(spherical_split(channels[k]).unit);
  }
  return x;
}

template <typename T>
std::vector<AngularDelayCsi> reconstruct(std::span<const AngularDelayCsi> channels,
                                         const DecoderParams<T>& params) {
  constexpr std::size_t kChunk = 256;
  std::vector<AngularDelayCsi> out;
  out.reserve(channels.size());
  for (std::size_t start = 0; start < channels.size(); start += kChunk) {
    const auto chunk = channels.subspan(start, std::min(kChunk, channels.size() - start));
    const BatchMat<T> x = unit_batch<T>(chunk);
    check_batch(params, x.rows(), params.shape.n(), "reconstruct");
    const BatchMat<T> y = params.phi.phi * x;
    const BatchMat<T> x_hat = decode_unit_batch(y, params);
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const Vec<T> col = x_hat.col(static_cast<Eigen::Index>(k));
      out.push_back(spherical_merge(chunk[k].norm() < kZeroNormGuard ? 0.0 : chunk[k].norm(),
                                    devectorize<T>(col, params.shape.r_d, params.shape.n_b)));
    }
  }
  return out;
}

template <typename T>
UnfoldingPass<T>::UnfoldingPass(const DecoderParams<T>& params, const BatchMat<T>& x_in)
    : params_(params), x_in_(x_in) {
  const auto& phi = params.phi.phi;
  check_batch(params, x_in.rows(), params.shape.n(), "UnfoldingPass");
  const auto image = params.shape.image();
  const Eigen::Index batch = x_in.cols();

  y_.noalias() = phi * x_in;
  x_.push_back(phi.transpose() * y_);
  prox_.resize(params.blocks.size());
  for (std::size_t k = 0; k < params.blocks.size(); ++k) {
    const auto& p = params.blocks[k];
    const BatchMat<T>& x_prev = x_.back();
    u_.push_back(phi * x_prev - y_);
    v_.push_back(phi.transpose() * u_.back());
    BatchMat<T> x = x_prev - p.rho * v_.back();  // r^(k); refined in place below

    auto& traces = prox_[k];
    traces.resize(static_cast<std::size_t>(batch));
    const T theta = p.theta();
    T csum = 0;
#pragma omp parallel for schedule(static) reduction(+ : csum)
    for (Eigen::Index n = 0; n < batch; ++n) {
      auto& t = traces[static_cast<std::size_t>(n)];
      const Mat<T> img = as_image(x.col(n).data(), image);
      Mat<T> tmp, out;
      kernels::conv3x3_forward(p.m, no_bias<T>(), img, image, t.m);
      kernels::conv3x3_forward(p.h1, no_bias<T>(), t.m, image, t.a1);
      kernels::conv3x3_forward(p.h2, no_bias<T>(), relu(t.a1), image, t.h);
      t.s = soft(t.h, theta);
      kernels::conv3x3_forward(p.ht1, no_bias<T>(), t.s, image, t.b1);
      kernels::conv3x3_forward(p.ht2, no_bias<T>(), relu(t.b1), image, t.g);
      kernels::conv3x3_forward(p.b, no_bias<T>(), t.g, image, out);
      // Left-inverse constraint: Ht(H(M r)) should reproduce M r.
      kernels::conv3x3_forward(p.ht1, no_bias<T>(), t.h, image, t.c1);
      kernels::conv3x3_forward(p.ht2, no_bias<T>(), relu(t.c1), image, tmp);
      t.diff = tmp - t.m;
      csum += t.diff.squaredNorm();
      Eigen::Map<Mat<T>>(x.col(n).data(), 2, image.pixels()) += out;
    }
    constraint_sum_ += csum;
    x_.push_back(std::move(x));
  }
}

template <typename T>
void UnfoldingPass<T>::backward(const BatchMat<T>& d_output, T constraint_weight,
                                DecoderParams<T>* grad, BatchMat<T>* d_input) const {
  const auto& params = params_;
  const auto& phi = params.phi.phi;
  const bool phi_grad = grad != nullptr && params.phi.trainable;
  const auto image = params.shape.image();
  const Eigen::Index batch = x_in_.cols();
  const int threads = omp_get_max_threads();

  BatchMat<T> dx = d_output;
  BatchMat<T> dy = BatchMat<T>::Zero(y_.rows(), batch);

  for (std::size_t k = params.blocks.size(); k-- > 0;) {
    const auto& p = params.blocks[k];
    const auto& traces = prox_[k];
    const BatchMat<T>& x_prev = x_[k];
    // r^(k) is recovered from the stored pieces.
    const BatchMat<T> r = x_prev - p.rho * v_[k];
    const T theta = p.theta();

    std::vector<IterationBlockParams<T>> partial;
    if (grad != nullptr) partial.assign(static_cast<std::size_t>(threads), zero_block<T>(params.shape));
    BatchMat<T> dr(dx.rows(), batch);

#pragma omp parallel num_threads(threads)
    {
      IterationBlockParams<T>* g = grad != nullptr ? &partial[static_cast<std::size_t>(omp_get_thread_num())] : nullptr;
      auto wg = [g](Mat<T> IterationBlockParams<T>::*field) -> Mat<T>* {
        return g != nullptr ? &(g->*field) : nullptr;
      };
#pragma omp for schedule(static)
      for (Eigen::Index n = 0; n < batch; ++n) {
        const auto& t = traces[static_cast<std::size_t>(n)];
        const Mat<T> img = as_image(r.col(n).data(), image);
        const Mat<T> dout = as_image(dx.col(n).data(), image);
        Mat<T> dimg = dout;
        Mat<T> d1, d2, dh, dm;

        kernels::conv3x3_backward(p.b, t.g, dout, image, wg(&IterationBlockParams<T>::b), nullptr, &d1);
        kernels::conv3x3_backward(p.ht2, relu(t.b1), d1, image, wg(&IterationBlockParams<T>::ht2), nullptr, &d2);
        kernels::conv3x3_backward(p.ht1, t.s, relu_grad(t.b1, d2), image, wg(&IterationBlockParams<T>::ht1), nullptr, &d1);
        // soft threshold: pass-through where |h| > theta, d/dtheta = -sgn(h)
        const auto active = (t.h.array().abs() > theta);
        dh = active.select(d1.array(), T(0)).matrix();
        if (g != nullptr) {
          const T dtheta = -(active.select(t.h.array().sign() * d1.array(), T(0))).sum();
          g->theta_raw += dtheta * sigmoid(p.theta_raw);
        }

        const Mat<T> ddiff = (T(2) * constraint_weight) * t.diff;
        dm = -ddiff;
        kernels::conv3x3_backward(p.ht2, relu(t.c1), ddiff, image, wg(&IterationBlockParams<T>::ht2), nullptr, &d1);
        kernels::conv3x3_backward(p.ht1, t.h, relu_grad(t.c1, d1), image, wg(&IterationBlockParams<T>::ht1), nullptr, &d2);
        dh += d2;

        kernels::conv3x3_backward(p.h2, relu(t.a1), dh, image, wg(&IterationBlockParams<T>::h2), nullptr, &d1);
        kernels::conv3x3_backward(p.h1, t.m, relu_grad(t.a1, d1), image, wg(&IterationBlockParams<T>::h1), nullptr, &d2);
        dm += d2;
        kernels::conv3x3_backward(p.m, img, dm, image, wg(&IterationBlockParams<T>::m), nullptr, &d1);
        dimg += d1;
        Eigen::Map<Mat<T>>(dr.col(n).data(), 2, image.pixels()) = dimg;
      }
    }
    if (grad != nullptr) {
      for (const auto& part : partial) accumulate(grad->blocks[k], part);
    }

    // r = x_prev - rho * Phi^T (Phi x_prev - y)
    if (grad != nullptr) grad->blocks[k].rho -= (dr.array() * v_[k].array()).sum();
    const BatchMat<T> dv = -p.rho * dr;
    const BatchMat<T> du = phi * dv;
    if (phi_grad) {
      grad->phi.phi.noalias() += u_[k] * dv.transpose();
      grad->phi.phi.noalias() += du * x_prev.transpose();
    }
    dx = dr;
    dx.noalias() += phi.transpose() * du;
    dy -= du;
  }

  // x^(0) = Phi^T y
  if (phi_grad) grad->phi.phi.noalias() += y_ * dx.transpose();
  dy.noalias() += phi * dx;
  // y = Phi x_in
  if (phi_grad) grad->phi.phi.noalias() += dy * x_in_.transpose();
  if (d_input != nullptr) *d_input = phi.transpose() * dy;
}

template <typename T>
LossParts<T> loss_total(const BatchMat<T>& x_true, const DecoderParams<T>& params, T gamma) {
  if (x_true.cols() == 0) throw DomainError("loss_total: empty batch");
  if (gamma < T(0)) throw DomainError("loss_total: negative gamma");
  const UnfoldingPass<T> pass(params, x_true);
  const T scale = T(1) / static_cast<T>(x_true.cols() * x_true.rows());
  LossParts<T> out;
  out.mse = (pass.output() - x_true).squaredNorm() * scale;
  out.constraint = pass.constraint_sum() * scale;
  out.total = out.mse + gamma * out.constraint;
  return out;
}

template <typename T>
LossParts<T> loss_and_gradient(const BatchMat<T>& x_true, const DecoderParams<T>& params, T gamma,
                               DecoderParams<T>& grad) {
  if (x_true.cols() == 0) throw DomainError("loss_and_gradient: empty batch");
  if (gamma < T(0)) throw DomainError("loss_and_gradient: negative gamma");
  const UnfoldingPass<T> pass(params, x_true);
  const T scale = T(1) / static_cast<T>(x_true.cols() * x_true.rows());
  const BatchMat<T> err = pass.output() - x_true;
  LossParts<T> out;
  out.mse = err.squaredNorm() * scale;
  out.constraint = pass.constraint_sum() * scale;
  out.total = out.mse + gamma * out.constraint;
  pass.backward((T(2) * scale) * err, gamma * scale, &grad, nullptr);
  return out;
}

#define CSIFB_INSTANTIATE_DECODER(T)                                                           \
  template T softplus<T>(T);                                                                  \
  template struct DecoderParams<T>;                                                           \
  template Vec<T> gradient_step<T>(const Vec<T>&, const Vec<T>&, const Mat<T>&, T);           \
  template Vec<T> proximal_block<T>(const Vec<T>&, const IterationBlockParams<T>&,            \
                                    kernels::ImageShape);                                     \
  template BatchMat<T> decode_unit_batch<T>(const BatchMat<T>&, const DecoderParams<T>&);     \
  template AngularDelayCsi decode<T>(const Codeword<T>&, const DecoderParams<T>&);            \
  template BatchMat<T> unit_batch<T>(std::span<const AngularDelayCsi>);                       \
  template std::vector<AngularDelayCsi> reconstruct<T>(std::span<const AngularDelayCsi>,      \
                                                       const DecoderParams<T>&);              \
  template class UnfoldingPass<T>;                                                            \
  template LossParts<T> loss_total<T>(const BatchMat<T>&, const DecoderParams<T>&, T);        \
  template LossParts<T> loss_and_gradient<T>(const BatchMat<T>&, const DecoderParams<T>&, T,  \
                                             DecoderParams<T>&);

CSIFB_INSTANTIATE_DECODER(float)
CSIFB_INSTANTIATE_DECODER(double)

template DecoderParams<double> DecoderParams<float>::cast<double>() const;
template DecoderParams<float> DecoderParams<double>::cast<float>() const;
template DecoderParams<float> DecoderParams<float>::cast<float>() const;
template DecoderParams<double> DecoderParams<double>::cast<double>() const;

#undef CSIFB_INSTANTIATE_DECODER

}  // namespace csifb
