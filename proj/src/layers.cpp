// Copyright 2026 The NoiseFlow-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "noiseflow/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace nflow {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::SignalDependent: return "signal";
    case LayerKind::Gain: return "gain";
    case LayerKind::AffineCoupling: return "coupling";
    case LayerKind::ChannelMix: return "mix";
  }
  return "unknown";
}

std::pair<Patch, double> Bijection::forward(const Patch& x, const ConditioningContext& ctx,
                                            const ParamStore& params) const {
  Patch y = x;
  const double logdet = forward(y.values(), y.shape(), ctx, params);
  return {std::move(y), logdet};
}

std::pair<Patch, double> Bijection::inverse(const Patch& y, const ConditioningContext& ctx,
                                            const ParamStore& params) const {
  Patch x = y;
  const double logdet = inverse(x.values(), x.shape(), ctx, params);
  return {std::move(x), logdet};
}

// ---------------------------------------------------------------------------
// Signal-dependent layer

namespace {

constexpr double kCleanTolerance = 1e-9;

double clamp_clean(double value) { return value < 0.0 ? 0.0 : value; }

}  // namespace

SignalDependentLayer::SignalDependentLayer(ParamStore& params, std::string name)
    : name_(std::move(name)) {
  b1_ = params.add(name_ + ".b1", {kInitB1});
  b2_ = params.add(name_ + ".b2", {kInitB2});
}

double SignalDependentLayer::beta1(const ParamStore& params) const {
  return std::exp(params[b1_].value[0]);
}

double SignalDependentLayer::beta2(const ParamStore& params) const {
  return std::exp(params[b2_].value[0]);
}

void SignalDependentLayer::check_clean(const ConditioningContext& ctx, const Shape& shape) const {
  if (ctx.clean.shape() != shape) {
    throw InputError(name_ + ": clean image shape " + to_string(ctx.clean.shape()) +
                     " does not match input shape " + to_string(shape));
  }
  const auto clean = ctx.clean.values();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (!(clean[i] >= -kCleanTolerance)) {
      throw InputError(name_ + ": clean image has invalid value " + std::to_string(clean[i]) +
                       " at element " + std::to_string(i));
    }
  }
}

std::vector<double> SignalDependentLayer::scale(const Patch& clean, const ParamStore& params) const {
  const double b1 = beta1(params);
  const double b2 = beta2(params);
  std::vector<double> s(clean.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(b1 * clamp_clean(clean[i]) + b2);
  return s;
}

double SignalDependentLayer::forward(std::span<double> x, const Shape& shape,
                                     const ConditioningContext& ctx,
                                     const ParamStore& params) const {
  check_clean(ctx, shape);
  const double b1 = beta1(params);
  const double b2 = beta2(params);
  const auto clean = ctx.clean.values();
  double logdet = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double var = b1 * clamp_clean(clean[i]) + b2;
    x[i] *= std::sqrt(var);
    logdet += 0.5 * std::log(var);
  }
  return logdet;
}

double SignalDependentLayer::inverse(std::span<double> y, const Shape& shape,
                                     const ConditioningContext& ctx,
                                     const ParamStore& params) const {
  check_clean(ctx, shape);
  const double b1 = beta1(params);
  const double b2 = beta2(params);
  const auto clean = ctx.clean.values();
  double logdet = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double var = b1 * clamp_clean(clean[i]) + b2;
    y[i] /= std::sqrt(var);
    logdet -= 0.5 * std::log(var);
  }
  return logdet;
}

void SignalDependentLayer::backward_inverse(std::span<const double> input, std::span<double> grad,
                                            const Shape& shape, const ConditioningContext& ctx,
                                            const ParamStore& params, std::span<double> param_grad,
                                            std::span<double> clean_grad) const {
  if (input.size() != shape.size() || grad.size() != shape.size()) {
    throw InputError(name_ + ": backward called without a matching forward cache");
  }
  check_clean(ctx, shape);
  const double b1 = beta1(params);
  const double b2 = beta2(params);
  const auto clean = ctx.clean.values();
  double g_b1 = 0.0;
  double g_b2 = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double level = clamp_clean(clean[i]);
    const double s = std::sqrt(b1 * level + b2);
    const double g_out = grad[i];
    // L = g_out * y / s + log s
    const double g_s = -g_out * input[i] / (s * s) + 1.0 / s;
    const double ds_dvar = 0.5 / s;
    g_b1 += g_s * ds_dvar * b1 * level;
    g_b2 += g_s * ds_dvar * b2;
    if (!clean_grad.empty() && clean[i] > 0.0) clean_grad[i] += g_s * ds_dvar * b1;
    grad[i] = g_out / s;
  }
  param_grad[params[b1_].offset] += g_b1;
  param_grad[params[b2_].offset] += g_b2;
}

// ---------------------------------------------------------------------------
// Gain layer

double GainLayer::initial_v() { return -std::log(200.0); }

GainLayer::GainLayer(ParamStore& params, std::vector<int> iso_set, int camera_count,
                     bool camera_aware, std::string name)
    : name_(std::move(name)),
      iso_set_(std::move(iso_set)),
      camera_count_(camera_count),
      camera_aware_(camera_aware) {
  if (iso_set_.empty()) throw InputError(name_ + ": ISO set is empty");
  for (std::size_t i = 0; i < iso_set_.size(); ++i) {
    if (iso_set_[i] <= 0) throw InputError(name_ + ": ISO levels must be positive");
    for (std::size_t j = 0; j < i; ++j) {
      if (iso_set_[i] == iso_set_[j]) {
        throw InputError(name_ + ": duplicate ISO level " + std::to_string(iso_set_[i]));
      }
    }
  }
  if (camera_count_ <= 0) throw InputError(name_ + ": camera count must be positive");
  v_ = params.add(name_ + ".v", std::vector<double>(iso_set_.size(), initial_v()));
  if (camera_aware_) {
    w_ = params.add(name_ + ".w", std::vector<double>(static_cast<std::size_t>(camera_count_), 0.0));
  }
}

std::vector<std::size_t> GainLayer::param_entries() const {
  if (camera_aware_) return {v_, w_};
  return {v_};
}

std::size_t GainLayer::iso_index(int iso) const {
  const auto it = std::find(iso_set_.begin(), iso_set_.end(), iso);
  if (it == iso_set_.end()) {
    throw InputError(name_ + ": ISO " + std::to_string(iso) + " is not in the configured ISO set");
  }
  return static_cast<std::size_t>(it - iso_set_.begin());
}

void GainLayer::check_camera(int camera_id) const {
  if (camera_id < 0 || camera_id >= camera_count_) {
    throw InputError(name_ + ": camera id " + std::to_string(camera_id) + " outside [0, " +
                     std::to_string(camera_count_) + ")");
  }
}

double GainLayer::log_gamma(int iso, int camera_id, const ParamStore& params) const {
  check_camera(camera_id);
  double lg = params[v_].value[iso_index(iso)] + std::log(static_cast<double>(iso));
  if (camera_aware_) lg += params[w_].value[static_cast<std::size_t>(camera_id)];
  return lg;
}

double GainLayer::gamma(int iso, int camera_id, const ParamStore& params) const {
  return std::exp(log_gamma(iso, camera_id, params));
}

void GainLayer::add_log_gamma_grad(int iso, int camera_id, double g, std::span<double> param_grad,
                                   const ParamStore& params) const {
  param_grad[params[v_].offset + iso_index(iso)] += g;
  if (camera_aware_) param_grad[params[w_].offset + static_cast<std::size_t>(camera_id)] += g;
}

double GainLayer::forward(std::span<double> x, const Shape&, const ConditioningContext& ctx,
                          const ParamStore& params) const {
  const double lg = log_gamma(ctx.iso, ctx.camera_id, params);
  const double g = std::exp(lg);
  for (double& v : x) v *= g;
  return static_cast<double>(x.size()) * lg;
}

double GainLayer::inverse(std::span<double> y, const Shape&, const ConditioningContext& ctx,
                          const ParamStore& params) const {
  const double lg = log_gamma(ctx.iso, ctx.camera_id, params);
  const double inv = std::exp(-lg);
  for (double& v : y) v *= inv;
  return -static_cast<double>(y.size()) * lg;
}

void GainLayer::backward_inverse(std::span<const double> input, std::span<double> grad,
                                 const Shape& shape, const ConditioningContext& ctx,
                                 const ParamStore& params, std::span<double> param_grad,
                                 std::span<double>) const {
  if (input.size() != shape.size() || grad.size() != shape.size()) {
    throw InputError(name_ + ": backward called without a matching forward cache");
  }
  const double lg = log_gamma(ctx.iso, ctx.camera_id, params);
  const double inv = std::exp(-lg);
  // L = sum g_out * y / gamma + D log gamma
  double g_lg = static_cast<double>(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    g_lg -= grad[i] * input[i] * inv;
    grad[i] *= inv;
  }
  add_log_gamma_grad(ctx.iso, ctx.camera_id, g_lg, param_grad, params);
}

// ---------------------------------------------------------------------------
// Affine coupling

struct AffineCouplingLayer::NetView {
  const double* w1;     // hidden x half, row-major
  const double* bias1;  // hidden
  const double* w2;     // (2 * half) x hidden, row-major; rows [0, half) give a
  const double* bias2;  // 2 * half
};

AffineCouplingLayer::AffineCouplingLayer(ParamStore& params, std::size_t channels,
                                         std::size_t hidden_width, bool transform_first_half,
                                         RngStream& rng, std::string name)
    : name_(std::move(name)),
      channels_(channels),
      half_(channels / 2),
      hidden_(hidden_width),
      transform_first_half_(transform_first_half) {
  if (channels_ < 2 || channels_ % 2 != 0) {
    throw InputError(name_ + ": affine coupling needs an even channel count >= 2");
  }
  if (hidden_ == 0) throw InputError(name_ + ": hidden width must be positive");
  std::vector<double> w1(hidden_ * half_);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(half_));
  for (double& v : w1) v = stddev * rng.normal();
  w1_ = params.add(name_ + ".w1", std::move(w1));
  bias1_ = params.add(name_ + ".b1", std::vector<double>(hidden_, 0.0));
  w2_ = params.add(name_ + ".w2", std::vector<double>(2 * half_ * hidden_, 0.0));
  bias2_ = params.add(name_ + ".b2", std::vector<double>(2 * half_, 0.0));
}

AffineCouplingLayer::NetView AffineCouplingLayer::view(const ParamStore& params) const {
  return {params[w1_].value.data(), params[bias1_].value.data(), params[w2_].value.data(),
          params[bias2_].value.data()};
}

void AffineCouplingLayer::check_shape(const Shape& shape) const {
  if (shape.channels != channels_) {
    throw InputError(name_ + ": expected " + std::to_string(channels_) + " channels, got " +
                     std::to_string(shape.channels));
  }
}

namespace {

// pre = W1 x_B + b1, hidden = relu(pre), out = W2 hidden + b2.
void coupling_net(const double* w1, const double* bias1, const double* w2, const double* bias2,
                  std::size_t half, std::size_t hidden, const double* x_b, double* pre,
                  double* act, double* out) {
  for (std::size_t j = 0; j < hidden; ++j) {
    double acc = bias1[j];
    const double* row = w1 + j * half;
    for (std::size_t k = 0; k < half; ++k) acc += row[k] * x_b[k];
    pre[j] = acc;
    act[j] = acc > 0.0 ? acc : 0.0;
  }
  for (std::size_t o = 0; o < 2 * half; ++o) {
    double acc = bias2[o];
    const double* row = w2 + o * hidden;
    for (std::size_t j = 0; j < hidden; ++j) acc += row[j] * act[j];
    out[o] = acc;
  }
}

}  // namespace

double AffineCouplingLayer::forward(std::span<double> x, const Shape& shape,
                                    const ConditioningContext&, const ParamStore& params) const {
  check_shape(shape);
  const NetView net = view(params);
  const std::size_t a_off = transform_first_half_ ? 0 : half_;
  const std::size_t b_off = transform_first_half_ ? half_ : 0;
  std::vector<double> pre(hidden_), act(hidden_), out(2 * half_);
  double logdet = 0.0;
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    double* px = x.data() + p * channels_;
    coupling_net(net.w1, net.bias1, net.w2, net.bias2, half_, hidden_, px + b_off, pre.data(),
                 act.data(), out.data());
    for (std::size_t k = 0; k < half_; ++k) {
      const double a = out[k];
      px[a_off + k] = std::exp(a) * px[a_off + k] + out[half_ + k];
      logdet += a;
    }
  }
  if (!std::isfinite(logdet)) throw NumericError(name_ + ": non-finite coupling network output");
  return logdet;
}

double AffineCouplingLayer::min_abs_preactivation(std::span<const double> input, const Shape& shape,
                                                  const ParamStore& params) const {
  check_shape(shape);
  const NetView net = view(params);
  const std::size_t b_off = transform_first_half_ ? half_ : 0;
  std::vector<double> pre(hidden_), act(hidden_), out(2 * half_);
  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    coupling_net(net.w1, net.bias1, net.w2, net.bias2, half_, hidden_,
                 input.data() + p * channels_ + b_off, pre.data(), act.data(), out.data());
    for (double v : pre) smallest = std::min(smallest, std::abs(v));
  }
  return smallest;
}

double AffineCouplingLayer::inverse(std::span<double> y, const Shape& shape,
                                    const ConditioningContext&, const ParamStore& params) const {
  check_shape(shape);
  const NetView net = view(params);
  const std::size_t a_off = transform_first_half_ ? 0 : half_;
  const std::size_t b_off = transform_first_half_ ? half_ : 0;
  std::vector<double> pre(hidden_), act(hidden_), out(2 * half_);
  double logdet = 0.0;
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    double* py = y.data() + p * channels_;
    coupling_net(net.w1, net.bias1, net.w2, net.bias2, half_, hidden_, py + b_off, pre.data(),
                 act.data(), out.data());
    for (std::size_t k = 0; k < half_; ++k) {
      const double a = out[k];
      py[a_off + k] = (py[a_off + k] - out[half_ + k]) * std::exp(-a);
      logdet -= a;
    }
  }
  if (!std::isfinite(logdet)) throw NumericError(name_ + ": non-finite coupling network output");
  return logdet;
}

void AffineCouplingLayer::backward_inverse(std::span<const double> input, std::span<double> grad,
                                           const Shape& shape, const ConditioningContext&,
                                           const ParamStore& params, std::span<double> param_grad,
                                           std::span<double>) const {
  check_shape(shape);
  if (input.size() != shape.size() || grad.size() != shape.size()) {
    throw InputError(name_ + ": backward called without a matching forward cache");
  }
  const NetView net = view(params);
  const std::size_t a_off = transform_first_half_ ? 0 : half_;
  const std::size_t b_off = transform_first_half_ ? half_ : 0;
  double* g_w1 = param_grad.data() + params[w1_].offset;
  double* g_bias1 = param_grad.data() + params[bias1_].offset;
  double* g_w2 = param_grad.data() + params[w2_].offset;
  double* g_bias2 = param_grad.data() + params[bias2_].offset;

  std::vector<double> pre(hidden_), act(hidden_), out(2 * half_), g_out(2 * half_), g_pre(hidden_);
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    const double* py = input.data() + p * channels_;
    double* pg = grad.data() + p * channels_;
    coupling_net(net.w1, net.bias1, net.w2, net.bias2, half_, hidden_, py + b_off, pre.data(),
                 act.data(), out.data());
    // L = sum g_x * (y_A - b) e^{-a} + sum g_x_B * y_B + sum a
    for (std::size_t k = 0; k < half_; ++k) {
      const double inv_scale = std::exp(-out[k]);
      const double x_a = (py[a_off + k] - out[half_ + k]) * inv_scale;
      const double g_x = pg[a_off + k];
      g_out[k] = 1.0 - g_x * x_a;
      g_out[half_ + k] = -g_x * inv_scale;
      pg[a_off + k] = g_x * inv_scale;
    }
    std::fill(g_pre.begin(), g_pre.end(), 0.0);
    for (std::size_t o = 0; o < 2 * half_; ++o) {
      const double go = g_out[o];
      g_bias2[o] += go;
      const double* w_row = net.w2 + o * hidden_;
      double* gw_row = g_w2 + o * hidden_;
      for (std::size_t j = 0; j < hidden_; ++j) {
        gw_row[j] += go * act[j];
        g_pre[j] += go * w_row[j];
      }
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      if (pre[j] <= 0.0) continue;
      const double gp = g_pre[j];
      g_bias1[j] += gp;
      const double* w_row = net.w1 + j * half_;
      double* gw_row = g_w1 + j * half_;
      for (std::size_t k = 0; k < half_; ++k) {
        gw_row[k] += gp * py[b_off + k];
        pg[b_off + k] += gp * w_row[k];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Channel mixing

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const MatrixRM> matrix_view(const std::vector<double>& values, std::size_t n) {
  return Eigen::Map<const MatrixRM>(values.data(), static_cast<Eigen::Index>(n),
                                    static_cast<Eigen::Index>(n));
}

}  // namespace

ChannelMixLayer::ChannelMixLayer(ParamStore& params, std::size_t channels, RngStream& rng,
                                 std::string name)
    : name_(std::move(name)), channels_(channels) {
  if (channels_ == 0) throw InputError(name_ + ": channel count must be positive");
  const auto n = static_cast<Eigen::Index>(channels_);
  Eigen::MatrixXd gaussian(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) gaussian(i, j) = rng.normal();
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Sign fix makes Q Haar-distributed.
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  std::vector<double> a(channels_ * channels_);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a[static_cast<std::size_t>(i * n + j)] = q(i, j);
  }
  a_ = params.add(name_ + ".A", std::move(a));
}

void ChannelMixLayer::check_shape(const Shape& shape) const {
  if (shape.channels != channels_) {
    throw InputError(name_ + ": expected " + std::to_string(channels_) + " channels, got " +
                     std::to_string(shape.channels));
  }
}

double ChannelMixLayer::log_abs_det(const ParamStore& params) const {
  const double det = matrix_view(params[a_].value, channels_).determinant();
  if (!std::isfinite(det) || std::abs(det) < kMinAbsDet) {
    throw NumericError(name_ + ": channel-mix matrix is singular (|det A| = " +
                       std::to_string(std::abs(det)) + ")");
  }
  return std::log(std::abs(det));
}

double ChannelMixLayer::forward(std::span<double> x, const Shape& shape,
                                const ConditioningContext&, const ParamStore& params) const {
  check_shape(shape);
  const double lad = log_abs_det(params);
  const auto a = matrix_view(params[a_].value, channels_);
  Eigen::VectorXd tmp(static_cast<Eigen::Index>(channels_));
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    Eigen::Map<Eigen::VectorXd> px(x.data() + p * channels_, static_cast<Eigen::Index>(channels_));
    tmp.noalias() = a * px;
    px = tmp;
  }
  return static_cast<double>(shape.pixels()) * lad;
}

double ChannelMixLayer::inverse(std::span<double> y, const Shape& shape,
                                const ConditioningContext&, const ParamStore& params) const {
  check_shape(shape);
  const double lad = log_abs_det(params);
  const Eigen::MatrixXd a_inv = matrix_view(params[a_].value, channels_).inverse();
  Eigen::VectorXd tmp(static_cast<Eigen::Index>(channels_));
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    Eigen::Map<Eigen::VectorXd> py(y.data() + p * channels_, static_cast<Eigen::Index>(channels_));
    tmp.noalias() = a_inv * py;
    py = tmp;
  }
  return -static_cast<double>(shape.pixels()) * lad;
}

void ChannelMixLayer::backward_inverse(std::span<const double> input, std::span<double> grad,
                                       const Shape& shape, const ConditioningContext&,
                                       const ParamStore& params, std::span<double> param_grad,
                                       std::span<double>) const {
  check_shape(shape);
  if (input.size() != shape.size() || grad.size() != shape.size()) {
    throw InputError(name_ + ": backward called without a matching forward cache");
  }
  log_abs_det(params);
  const auto n = static_cast<Eigen::Index>(channels_);
  const Eigen::MatrixXd a_inv = matrix_view(params[a_].value, channels_).inverse();
  const Eigen::MatrixXd a_inv_t = a_inv.transpose();
  // L = sum_p g_p^T A^{-1} y_p + HW log|det A|
  // dL/dy_p = A^{-T} g_p,  dL/dA = -sum_p (A^{-T} g_p)(A^{-1} y_p)^T + HW A^{-T}
  Eigen::MatrixXd g_a = static_cast<double>(shape.pixels()) * a_inv_t;
  Eigen::VectorXd u(n), x(n);
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    Eigen::Map<const Eigen::VectorXd> py(input.data() + p * channels_, n);
    Eigen::Map<Eigen::VectorXd> pg(grad.data() + p * channels_, n);
    x.noalias() = a_inv * py;
    u.noalias() = a_inv_t * pg;
    g_a.noalias() -= u * x.transpose();
    pg = u;
  }
  double* out = param_grad.data() + params[a_].offset;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out[i * n + j] += g_a(i, j);
  }
}

}  // namespace nflow
