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

// Dense patches, parameter storage, Adam, seeded random streams and the
// finite-difference oracles used to validate analytic gradients and
// log-determinants.

#ifndef NOISEFLOW_NUMERICS_HPP_
#define NOISEFLOW_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noiseflow/error.hpp"

namespace nflow {

/// Height x width x channels, channel-fastest (HWC) layout.
struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  bool valid() const { return height > 0 && width > 0 && channels > 0; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

template <typename T>
class BasicPatch {
 public:
  BasicPatch() = default;

  explicit BasicPatch(Shape shape, T fill = T{}) : shape_(shape) {
    if (!shape.valid()) throw InputError("patch shape must be strictly positive: " + to_string(shape));
    data_.assign(shape.size(), fill);
  }

  BasicPatch(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid()) throw InputError("patch shape must be strictly positive: " + to_string(shape));
    if (data_.size() != shape.size()) {
      throw InputError("patch data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& data() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_.width + x) * shape_.channels + c];
  }
  const T& operator()(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_.width + x) * shape_.channels + c];
  }

  template <typename U>
  BasicPatch<U> cast() const {
    return BasicPatch<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicPatch&, const BasicPatch&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

/// Model arithmetic is 64-bit throughout.
using Patch = BasicPatch<double>;
/// Storage precision of the packed dataset format.
using PatchF32 = BasicPatch<float>;

bool all_finite(std::span<const double> values);

// ---------------------------------------------------------------------------
// Random streams

/// Reproducible random stream keyed by (seed, stream_id). Uniforms come from
/// the top 53 bits of mt19937_64 and normals from Box-Muller, so sequences do
/// not depend on the standard library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal();

  /// Independent child stream; same parent state yields the same child.
  RngStream split(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

Patch standard_normal_patch(const Shape& shape, RngStream& rng);

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.uniform_index(i)]);
  }
}

// ---------------------------------------------------------------------------
// Parameters and optimization

struct ParamEntry {
  std::string name;
  /// Position of this entry in the flattened parameter vector.
  std::size_t offset = 0;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> adam_m;
  std::vector<double> adam_v;

  std::size_t size() const { return value.size(); }
};

/// Ordered, uniquely named parameter vectors with their gradient
/// accumulators and Adam moments.
class ParamStore {
 public:
  /// Appends an entry and returns its index. Throws on duplicate names.
  std::size_t add(std::string name, std::vector<double> init);

  std::size_t entry_count() const { return entries_.size(); }
  std::size_t total_count() const { return total_; }

  ParamEntry& operator[](std::size_t index) { return entries_[index]; }
  const ParamEntry& operator[](std::size_t index) const { return entries_[index]; }
  std::span<const ParamEntry> entries() const { return entries_; }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws InputError when the name is unknown.
  const ParamEntry& at(std::string_view name) const;
  ParamEntry& at(std::string_view name);

  std::vector<double> flat_values() const;
  void set_flat_values(std::span<const double> values);
  std::vector<double> flat_grads() const;
  /// Adds a flat gradient vector (same layout as flat_values) into the
  /// per-entry accumulators.
  void accumulate_grads(std::span<const double> flat);
  void zero_grad();
  void reset_optimizer_state();

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; values <= 0 disable clipping.
  double clip = 10.0;
};

/// One bias-corrected Adam update in place. `step` is 1-based. Gradients are
/// left untouched. Throws NumericError naming the first parameter with a
/// non-finite gradient.
void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps,
               long step, std::span<const double> entry_lr_scale = {});
/// `entry_lr_scale`, when non-empty, holds one learning-rate multiplier per
/// ParamStore entry.
void adam_step(ParamStore& params, const AdamConfig& config, long step,
               std::span<const double> entry_lr_scale = {});

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

// ---------------------------------------------------------------------------
// Finite-difference oracles

using LossFn = std::function<double(const ParamStore&)>;

/// Central differences (loss(theta + h) - loss(theta - h)) / 2h for every
/// scalar parameter, in flat order. Parameter values are restored afterwards.
std::vector<double> finite_diff_gradient(const LossFn& loss, ParamStore& params, double h);

using VectorMap = std::function<std::vector<double>(std::span<const double>)>;

/// log|det J| of the central-difference Jacobian of `f` at `x`. Limited to
/// 256 dimensions since it costs 2D evaluations of f plus an O(D^3) LU.
double numeric_jacobian_logdet(const VectorMap& f, std::span<const double> x, double h);

}  // namespace nflow

#endif  // NOISEFLOW_NUMERICS_HPP_
