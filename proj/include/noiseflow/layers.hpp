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

// The four bijection kinds: signal-dependent scaling, ISO/camera gain,
// affine coupling and 1x1 channel mixing.
//
// Direction convention: forward() maps base -> noise (generative) and
// inverse() maps noise -> base (normalizing). The likelihood is evaluated
// along inverse(), so backward_inverse() differentiates
//
//     L(y, theta) = <upstream, g(y; theta)> - log|det dg/dy|
//
// which is exactly the per-layer contribution to the negative
// log-likelihood once `upstream` holds dNLL/d(output).

#ifndef NOISEFLOW_LAYERS_HPP_
#define NOISEFLOW_LAYERS_HPP_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "noiseflow/numerics.hpp"

namespace nflow {

enum class LayerKind { SignalDependent, Gain, AffineCoupling, ChannelMix };

std::string to_string(LayerKind kind);

/// Clean image, ISO level and camera index that condition the flow. `clean`
/// must already be the latent clean image when handed to a layer; the model
/// applies the gain-amplification correction before that.
struct ConditioningContext {
  Patch clean;
  int iso = 0;
  int camera_id = 0;
  /// Clean values were recorded after sensor gain (I_gamma rather than I).
  bool clean_is_gain_amplified = false;
};

class Bijection {
 public:
  virtual ~Bijection() = default;

  virtual LayerKind kind() const = 0;
  /// Prefix of this layer's parameter names, e.g. "signal" or "step3.mix".
  virtual const std::string& name() const = 0;
  /// Indices of the ParamStore entries this layer owns.
  virtual std::vector<std::size_t> param_entries() const = 0;

  /// In place, base -> noise. Returns log|det df/dx|.
  virtual double forward(std::span<double> x, const Shape& shape, const ConditioningContext& ctx,
                         const ParamStore& params) const = 0;
  /// In place, noise -> base. Returns log|det dg/dy|, the negative of the
  /// forward log-det at the image point.
  virtual double inverse(std::span<double> y, const Shape& shape, const ConditioningContext& ctx,
                         const ParamStore& params) const = 0;

  /// `input` is the value inverse() consumed. On entry `grad` holds the
  /// upstream gradient w.r.t. inverse()'s output; on exit it holds the
  /// gradient w.r.t. `input`. Parameter gradients are added to `param_grad`
  /// (flat ParamStore layout). When `clean_grad` is non-empty, gradients
  /// w.r.t. ctx.clean are added to it.
  virtual void backward_inverse(std::span<const double> input, std::span<double> grad,
                                const Shape& shape, const ConditioningContext& ctx,
                                const ParamStore& params, std::span<double> param_grad,
                                std::span<double> clean_grad) const = 0;

  /// Patch-valued conveniences returning (output, log-det).
  std::pair<Patch, double> forward(const Patch& x, const ConditioningContext& ctx,
                                   const ParamStore& params) const;
  std::pair<Patch, double> inverse(const Patch& y, const ConditioningContext& ctx,
                                   const ParamStore& params) const;
};

/// y = s * x with s = sqrt(beta1 * I + beta2), beta_k = exp(b_k).
class SignalDependentLayer final : public Bijection {
 public:
  static constexpr double kInitB1 = -5.0;
  static constexpr double kInitB2 = 0.0;

  /// Registers "<name>.b1" and "<name>.b2" in `params`.
  SignalDependentLayer(ParamStore& params, std::string name = "signal");

  LayerKind kind() const override { return LayerKind::SignalDependent; }
  const std::string& name() const override { return name_; }
  std::vector<std::size_t> param_entries() const override { return {b1_, b2_}; }

  double forward(std::span<double> x, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  double inverse(std::span<double> y, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  void backward_inverse(std::span<const double> input, std::span<double> grad, const Shape& shape,
                        const ConditioningContext& ctx, const ParamStore& params,
                        std::span<double> param_grad, std::span<double> clean_grad) const override;
  using Bijection::forward;
  using Bijection::inverse;

  double beta1(const ParamStore& params) const;
  double beta2(const ParamStore& params) const;
  /// Per-element scale s for the given clean image.
  std::vector<double> scale(const Patch& clean, const ParamStore& params) const;

 private:
  void check_clean(const ConditioningContext& ctx, const Shape& shape) const;

  std::string name_;
  std::size_t b1_;
  std::size_t b2_;
};

/// y = gamma * x with gamma = psi_m * exp(v_ISO) * ISO. Camera factors
/// psi_m = exp(w_m) exist only when the layer is camera-aware.
class GainLayer final : public Bijection {
 public:
  /// v_ISO starts at -ln 200 so gamma(200) = 1.
  static double initial_v();

  GainLayer(ParamStore& params, std::vector<int> iso_set, int camera_count, bool camera_aware,
            std::string name = "gain");

  LayerKind kind() const override { return LayerKind::Gain; }
  const std::string& name() const override { return name_; }
  std::vector<std::size_t> param_entries() const override;

  double forward(std::span<double> x, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  double inverse(std::span<double> y, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  void backward_inverse(std::span<const double> input, std::span<double> grad, const Shape& shape,
                        const ConditioningContext& ctx, const ParamStore& params,
                        std::span<double> param_grad, std::span<double> clean_grad) const override;
  using Bijection::forward;
  using Bijection::inverse;

  const std::vector<int>& iso_set() const { return iso_set_; }
  int camera_count() const { return camera_count_; }
  bool camera_aware() const { return camera_aware_; }

  /// Index of `iso` in the configured set; throws InputError if absent.
  std::size_t iso_index(int iso) const;
  double log_gamma(int iso, int camera_id, const ParamStore& params) const;
  double gamma(int iso, int camera_id, const ParamStore& params) const;
  /// Adds dL/d(log gamma) to the v (and w) gradient slots for this context.
  void add_log_gamma_grad(int iso, int camera_id, double g, std::span<double> param_grad,
                          const ParamStore& params) const;

 private:
  void check_camera(int camera_id) const;

  std::string name_;
  std::vector<int> iso_set_;
  int camera_count_;
  bool camera_aware_;
  std::size_t v_;
  std::size_t w_ = 0;
};

/// Affine coupling: the transformed half A is rescaled and shifted by
/// (a, b) = net(x_B), where net is a per-pixel affine -> ReLU -> affine map.
/// The output stage is zero-initialized so the layer starts as identity.
class AffineCouplingLayer final : public Bijection {
 public:
  AffineCouplingLayer(ParamStore& params, std::size_t channels, std::size_t hidden_width,
                      bool transform_first_half, RngStream& rng, std::string name);

  LayerKind kind() const override { return LayerKind::AffineCoupling; }
  const std::string& name() const override { return name_; }
  std::vector<std::size_t> param_entries() const override { return {w1_, bias1_, w2_, bias2_}; }

  double forward(std::span<double> x, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  double inverse(std::span<double> y, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  void backward_inverse(std::span<const double> input, std::span<double> grad, const Shape& shape,
                        const ConditioningContext& ctx, const ParamStore& params,
                        std::span<double> param_grad, std::span<double> clean_grad) const override;
  using Bijection::forward;
  using Bijection::inverse;

  /// Smallest |pre-activation| of the hidden ReLU over all pixels, for the
  /// value inverse() would consume. Finite differences are unreliable when
  /// this is comparable to the step size.
  double min_abs_preactivation(std::span<const double> input, const Shape& shape,
                               const ParamStore& params) const;

  bool transforms_first_half() const { return transform_first_half_; }
  std::size_t hidden_width() const { return hidden_; }

 private:
  struct NetView;
  NetView view(const ParamStore& params) const;
  void check_shape(const Shape& shape) const;

  std::string name_;
  std::size_t channels_;
  std::size_t half_;
  std::size_t hidden_;
  bool transform_first_half_;
  std::size_t w1_, bias1_, w2_, bias2_;
};

/// Per-pixel invertible linear map y_p = A x_p (a 1x1 convolution).
class ChannelMixLayer final : public Bijection {
 public:
  static constexpr double kMinAbsDet = 1e-12;

  /// A starts as a Haar-random orthogonal matrix.
  ChannelMixLayer(ParamStore& params, std::size_t channels, RngStream& rng, std::string name);

  LayerKind kind() const override { return LayerKind::ChannelMix; }
  const std::string& name() const override { return name_; }
  std::vector<std::size_t> param_entries() const override { return {a_}; }

  double forward(std::span<double> x, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  double inverse(std::span<double> y, const Shape& shape, const ConditioningContext& ctx,
                 const ParamStore& params) const override;
  void backward_inverse(std::span<const double> input, std::span<double> grad, const Shape& shape,
                        const ConditioningContext& ctx, const ParamStore& params,
                        std::span<double> param_grad, std::span<double> clean_grad) const override;
  using Bijection::forward;
  using Bijection::inverse;

  /// log|det A|; throws NumericError when |det A| < kMinAbsDet.
  double log_abs_det(const ParamStore& params) const;

 private:
  void check_shape(const Shape& shape) const;

  std::string name_;
  std::size_t channels_;
  std::size_t a_;
};

}  // namespace nflow

#endif  // NOISEFLOW_LAYERS_HPP_
