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

#include "noiseflow/model.hpp"

#include <cmath>
#include <numbers>

namespace nflow {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_finite(std::span<const double> values, std::size_t layer_index, const Bijection& layer) {
  if (!all_finite(values)) {
    throw NumericError("non-finite intermediate after layer " + std::to_string(layer_index) + " (" +
                       layer.name() + ")");
  }
}

}  // namespace

double standard_normal_logpdf(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return -0.5 * sq - static_cast<double>(x.size()) * kHalfLog2Pi;
}

FlowModel FlowModel::build(const ModelConfig& config, RngStream& rng) {
  FlowModel model;
  model.config_ = config;
  model.rebuild_layers(rng);
  return model;
}

FlowModel::FlowModel(const FlowModel& other) : config_(other.config_) {
  RngStream scratch(0);
  rebuild_layers(scratch);
  params_ = other.params_;
}

FlowModel& FlowModel::operator=(const FlowModel& other) {
  if (this != &other) {
    FlowModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void FlowModel::rebuild_layers(RngStream& rng) {
  params_ = ParamStore();
  layers_.clear();
  signal_ = nullptr;
  gain_ = nullptr;
  if (config_.channels == 0) throw InputError("channel count must be positive");
  const bool camera_aware = config_.arch.has_camera();
  std::size_t step = 0;
  std::size_t coupling_index = 0;
  for (const auto& token : config_.arch.tokens) {
    switch (token.kind) {
      case TokenKind::Signal: {
        auto layer = std::make_unique<SignalDependentLayer>(params_, "signal");
        signal_ = layer.get();
        layers_.push_back(std::move(layer));
        break;
      }
      case TokenKind::Gain: {
        auto layer = std::make_unique<GainLayer>(params_, config_.iso_set, config_.camera_count,
                                                 camera_aware, "gain");
        gain_ = layer.get();
        layers_.push_back(std::move(layer));
        break;
      }
      case TokenKind::Camera:
        break;
      case TokenKind::Steps:
        for (int k = 0; k < token.steps; ++k, ++step) {
          const std::string prefix = "step" + std::to_string(step);
          // Alternate the transformed half so every channel gets rescaled.
          const bool first_half = coupling_index++ % 2 == 0;
          layers_.push_back(std::make_unique<AffineCouplingLayer>(
              params_, config_.channels, config_.hidden_width, first_half, rng,
              prefix + ".coupling"));
          layers_.push_back(
              std::make_unique<ChannelMixLayer>(params_, config_.channels, rng, prefix + ".mix"));
        }
        break;
    }
  }
}

std::vector<LayerParamCount> FlowModel::param_breakdown() const {
  std::vector<LayerParamCount> out;
  for (const auto& layer : layers_) {
    std::size_t count = 0;
    for (std::size_t entry : layer->param_entries()) count += params_[entry].size();
    out.push_back({layer->name(), layer->kind(), count});
  }
  return out;
}

ConditioningContext FlowModel::latent_context(const ConditioningContext& ctx) const {
  if (!ctx.clean_is_gain_amplified) return ctx;
  if (gain_ == nullptr) {
    throw InputError("gain-amplified clean data needs a gain layer to recover the latent image");
  }
  ConditioningContext latent = ctx;
  const double inv_gamma = std::exp(-gain_->log_gamma(ctx.iso, ctx.camera_id, params_));
  for (double& v : latent.clean.values()) v *= inv_gamma;
  latent.clean_is_gain_amplified = false;
  return latent;
}

Patch FlowModel::inverse(const Patch& noise, const ConditioningContext& ctx, double* logdet) const {
  if (noise.shape() != ctx.clean.shape()) {
    throw InputError("noise shape " + to_string(noise.shape()) + " does not match clean shape " +
                     to_string(ctx.clean.shape()));
  }
  const ConditioningContext latent = latent_context(ctx);
  Patch x = noise;
  double total = 0.0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    total += layers_[k]->inverse(x.values(), x.shape(), latent, params_);
    check_finite(x.values(), k, *layers_[k]);
  }
  if (logdet) *logdet = total;
  return x;
}

Patch FlowModel::forward(const Patch& base, const ConditioningContext& ctx, double* logdet) const {
  if (base.shape() != ctx.clean.shape()) {
    throw InputError("base shape " + to_string(base.shape()) + " does not match clean shape " +
                     to_string(ctx.clean.shape()));
  }
  const ConditioningContext latent = latent_context(ctx);
  Patch x = base;
  double total = 0.0;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    total += layers_[k]->forward(x.values(), x.shape(), latent, params_);
    check_finite(x.values(), k, *layers_[k]);
  }
  if (logdet) *logdet = total;
  return x;
}

NllResult FlowModel::nll(const Patch& noise, const ConditioningContext& ctx) const {
  double logdet = 0.0;
  const Patch base = inverse(noise, ctx, &logdet);
  const double total = -(standard_normal_logpdf(base.values()) + logdet);
  if (!std::isfinite(total)) throw NumericError("non-finite negative log-likelihood");
  return {total, total / static_cast<double>(noise.size())};
}

NllResult FlowModel::nll_with_grad(const Patch& noise, const ConditioningContext& ctx,
                                   std::span<double> param_grad, double grad_scale) const {
  if (param_grad.size() != params_.total_count()) {
    throw InputError("gradient buffer does not match the parameter count");
  }
  if (noise.shape() != ctx.clean.shape()) {
    throw InputError("noise shape " + to_string(noise.shape()) + " does not match clean shape " +
                     to_string(ctx.clean.shape()));
  }
  const ConditioningContext latent = latent_context(ctx);
  const Shape& shape = noise.shape();

  std::vector<std::vector<double>> tape(layers_.size());
  std::vector<double> x(noise.values().begin(), noise.values().end());
  double logdet = 0.0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    tape[k] = x;
    logdet += layers_[k]->inverse(x, shape, latent, params_);
    check_finite(x, k, *layers_[k]);
  }
  const double total = -(standard_normal_logpdf(x) + logdet);
  if (!std::isfinite(total)) throw NumericError("non-finite negative log-likelihood");

  // dNLL/dz = z for the standard Normal base measure.
  std::vector<double> grad = std::move(x);
  std::vector<double> local(params_.total_count(), 0.0);
  const bool track_clean = ctx.clean_is_gain_amplified && signal_ != nullptr;
  std::vector<double> clean_grad(track_clean ? shape.size() : 0, 0.0);
  for (std::size_t k = layers_.size(); k-- > 0;) {
    layers_[k]->backward_inverse(tape[k], grad, shape, latent, params_, local, clean_grad);
  }
  if (track_clean) {
    // I = I_gamma / gamma, so dI/dlog(gamma) = -I.
    double g_log_gamma = 0.0;
    const auto clean = latent.clean.values();
    for (std::size_t i = 0; i < clean.size(); ++i) g_log_gamma -= clean_grad[i] * clean[i];
    gain_->add_log_gamma_grad(ctx.iso, ctx.camera_id, g_log_gamma, local, params_);
  }
  for (std::size_t i = 0; i < local.size(); ++i) param_grad[i] += grad_scale * local[i];
  return {total, total / static_cast<double>(noise.size())};
}

Patch FlowModel::sample(const ConditioningContext& ctx, RngStream& rng) const {
  const Patch eps = standard_normal_patch(ctx.clean.shape(), rng);
  return forward(eps, ctx);
}

}  // namespace nflow
