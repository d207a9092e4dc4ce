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

#ifndef NOISEFLOW_MODEL_HPP_
#define NOISEFLOW_MODEL_HPP_

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "noiseflow/layers.hpp"
#include "noiseflow/numerics.hpp"

namespace nflow {

// ---------------------------------------------------------------------------
// Architecture strings
//
// A dash-separated token list such as "S-Ax4-G-Ax4-CAM":
//   S     signal-dependent layer
//   G     gain layer
//   CAM   camera-specific gain factors (requires G)
//   AxK   K unconditional steps, each an affine coupling then a channel mix
// Tokens are listed from the noise side, i.e. in the order the normalizing
// (noise -> base) pass applies them.

enum class TokenKind { Signal, Gain, Camera, Steps };

struct ArchToken {
  TokenKind kind;
  int steps = 0;  // only for Steps
  friend bool operator==(const ArchToken&, const ArchToken&) = default;
};

struct ArchitectureSpec {
  std::vector<ArchToken> tokens;

  /// Throws ParseError carrying the character position of the bad token.
  static ArchitectureSpec parse(std::string_view text);
  std::string render() const;

  bool has_signal() const;
  bool has_gain() const;
  bool has_camera() const;
  int total_steps() const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

inline constexpr std::string_view kDefaultArchitecture = "S-Ax4-G-Ax4-CAM";
inline constexpr std::size_t kParameterBudget = 2500;

struct ModelConfig {
  ArchitectureSpec arch = ArchitectureSpec::parse(kDefaultArchitecture);
  std::vector<int> iso_set = {100, 400, 800, 1600};
  int camera_count = 5;
  std::size_t hidden_width = 32;
  std::size_t channels = 4;
};

struct NllResult {
  double total = 0.0;    // nats
  double per_dim = 0.0;  // nats per dimension
};

struct LayerParamCount {
  std::string layer;
  LayerKind kind;
  std::size_t count;
};

// ---------------------------------------------------------------------------

class FlowModel {
 public:
  static FlowModel build(const ModelConfig& config, RngStream& rng);

  FlowModel(FlowModel&&) noexcept = default;
  FlowModel& operator=(FlowModel&&) noexcept = default;
  FlowModel(const FlowModel& other);
  FlowModel& operator=(const FlowModel& other);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t layer_count() const { return layers_.size(); }
  /// Layers in normalizing order (noise side first).
  const Bijection& layer(std::size_t index) const { return *layers_[index]; }

  const SignalDependentLayer* signal_layer() const { return signal_; }
  const GainLayer* gain_layer() const { return gain_; }

  std::size_t param_count() const { return params_.total_count(); }
  std::vector<LayerParamCount> param_breakdown() const;

  /// Context whose clean image is the latent one: gain-amplified clean
  /// values are divided by the current gamma(ISO, camera).
  ConditioningContext latent_context(const ConditioningContext& ctx) const;

  /// Noise -> base. `logdet` receives sum of inverse log-dets.
  Patch inverse(const Patch& noise, const ConditioningContext& ctx, double* logdet = nullptr) const;
  /// Base -> noise. `logdet` receives sum of forward log-dets.
  Patch forward(const Patch& base, const ConditioningContext& ctx, double* logdet = nullptr) const;

  /// Exact negative log-likelihood of `noise` via the change of variables.
  NllResult nll(const Patch& noise, const ConditioningContext& ctx) const;
  /// Same as nll(), additionally adding d(total NLL)/d(theta) * grad_scale to
  /// `param_grad` (flat ParamStore layout).
  NllResult nll_with_grad(const Patch& noise, const ConditioningContext& ctx,
                          std::span<double> param_grad, double grad_scale = 1.0) const;

  /// Draws eps ~ N(0, I) shaped like ctx.clean and returns forward(eps).
  Patch sample(const ConditioningContext& ctx, RngStream& rng) const;

 private:
  FlowModel() = default;
  void rebuild_layers(RngStream& rng);

  ModelConfig config_;
  ParamStore params_;
  std::vector<std::unique_ptr<Bijection>> layers_;
  const SignalDependentLayer* signal_ = nullptr;
  const GainLayer* gain_ = nullptr;
};

/// Log-density of `x` under the isotropic standard Normal.
double standard_normal_logpdf(std::span<const double> x);

// ---------------------------------------------------------------------------
// Checkpoints (NFLOW1)
//
// Little-endian layout:
//   magic "NFLOW1\0" (7 bytes), u16 format version
//   u32 arch length, arch bytes
//   u32 ISO count, u32 ISO levels, u32 camera count, u32 hidden width,
//   u32 channel count
//   u32 metadata length, metadata bytes (JSON)
//   u32 block count, then per block: u32 name length, name bytes,
//   u64 value count, f64 values

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  FlowModel model;
  nlohmann::json metadata;
};

void save(const FlowModel& model, const std::filesystem::path& path,
          const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
FlowModel load(const std::filesystem::path& path);
/// Loads and verifies that the stored ISO set equals `expected_iso_set`.
FlowModel load(const std::filesystem::path& path, const std::vector<int>& expected_iso_set);

}  // namespace nflow

#endif  // NOISEFLOW_MODEL_HPP_
