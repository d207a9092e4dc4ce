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

#include "noiseflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

namespace nflow {

std::string to_string(const Shape& shape) {
  return "(" + std::to_string(shape.height) + "," + std::to_string(shape.width) + "," +
         std::to_string(shape.channels) + ")";
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream_id) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream_id),
                       static_cast<std::uint32_t>(stream_id >> 32)};
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  auto seq = make_seed_seq(seed, stream_id);
  engine_.seed(seq);
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw InputError("uniform_index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return static_cast<std::size_t>(r % bound);
}

double RngStream::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

RngStream RngStream::split(std::uint64_t child_id) const {
  // Mix parent identity into the child seed (splitmix64 finalizer).
  std::uint64_t z = seed_ ^ (stream_id_ * 0x9E3779B97F4A7C15ULL) ^ 0xD1B54A32D192ED03ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return RngStream(z, child_id);
}

Patch standard_normal_patch(const Shape& shape, RngStream& rng) {
  Patch patch(shape);
  for (double& v : patch.values()) v = rng.normal();
  return patch;
}

// ---------------------------------------------------------------------------

std::size_t ParamStore::add(std::string name, std::vector<double> init) {
  if (find(name)) throw InputError("duplicate parameter name: " + name);
  ParamEntry entry;
  entry.name = std::move(name);
  entry.offset = total_;
  const std::size_t n = init.size();
  entry.value = std::move(init);
  entry.grad.assign(n, 0.0);
  entry.adam_m.assign(n, 0.0);
  entry.adam_v.assign(n, 0.0);
  total_ += n;
  entries_.push_back(std::move(entry));
  return entries_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

const ParamEntry& ParamStore::at(std::string_view name) const {
  const auto index = find(name);
  if (!index) throw InputError("unknown parameter: " + std::string(name));
  return entries_[*index];
}

ParamEntry& ParamStore::at(std::string_view name) {
  const auto index = find(name);
  if (!index) throw InputError("unknown parameter: " + std::string(name));
  return entries_[*index];
}

std::vector<double> ParamStore::flat_values() const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& e : entries_) out.insert(out.end(), e.value.begin(), e.value.end());
  return out;
}

void ParamStore::set_flat_values(std::span<const double> values) {
  if (values.size() != total_) throw InputError("flat parameter vector has wrong length");
  for (auto& e : entries_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size(), e.value.begin());
  }
}

std::vector<double> ParamStore::flat_grads() const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& e : entries_) out.insert(out.end(), e.grad.begin(), e.grad.end());
  return out;
}

void ParamStore::accumulate_grads(std::span<const double> flat) {
  if (flat.size() != total_) throw InputError("flat gradient vector has wrong length");
  for (auto& e : entries_) {
    for (std::size_t i = 0; i < e.size(); ++i) e.grad[i] += flat[e.offset + i];
  }
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

void ParamStore::reset_optimizer_state() {
  for (auto& e : entries_) {
    std::fill(e.adam_m.begin(), e.adam_m.end(), 0.0);
    std::fill(e.adam_v.begin(), e.adam_v.end(), 0.0);
  }
}

void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps,
               long step, std::span<const double> entry_lr_scale) {
  if (step < 1) throw InputError("adam_step: step index must be >= 1");
  if (!entry_lr_scale.empty() && entry_lr_scale.size() != params.entry_count()) {
    throw InputError("adam_step: expected " + std::to_string(params.entry_count()) +
                     " learning-rate multipliers, got " + std::to_string(entry_lr_scale.size()));
  }
  for (std::size_t k = 0; k < params.entry_count(); ++k) {
    const auto& e = params[k];
    if (!all_finite(e.grad)) throw NumericError("non-finite gradient for parameter " + e.name);
  }
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.entry_count(); ++k) {
    auto& e = params[k];
    const double entry_lr = entry_lr_scale.empty() ? lr : lr * entry_lr_scale[k];
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double g = e.grad[i];
      e.adam_m[i] = beta1 * e.adam_m[i] + (1.0 - beta1) * g;
      e.adam_v[i] = beta2 * e.adam_v[i] + (1.0 - beta2) * g * g;
      const double m_hat = e.adam_m[i] / correction1;
      const double v_hat = e.adam_v[i] / correction2;
      e.value[i] -= entry_lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

void adam_step(ParamStore& params, const AdamConfig& config, long step,
               std::span<const double> entry_lr_scale) {
  adam_step(params, config.lr, config.beta1, config.beta2, config.eps, step, entry_lr_scale);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < params.entry_count(); ++k) {
    for (double g : params[k].grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (std::size_t k = 0; k < params.entry_count(); ++k) {
      for (double& g : params[k].grad) g *= scale;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------

std::vector<double> finite_diff_gradient(const LossFn& loss, ParamStore& params, double h) {
  if (!(h > 0.0)) throw InputError("finite_diff_gradient: step must be positive");
  std::vector<double> grad(params.total_count(), 0.0);
  for (std::size_t k = 0; k < params.entry_count(); ++k) {
    auto& e = params[k];
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double saved = e.value[i];
      e.value[i] = saved + h;
      const double plus = loss(params);
      e.value[i] = saved - h;
      const double minus = loss(params);
      e.value[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("non-finite loss while differentiating " + e.name + "[" +
                           std::to_string(i) + "]");
      }
      grad[e.offset + i] = (plus - minus) / (2.0 * h);
    }
  }
  return grad;
}

double numeric_jacobian_logdet(const VectorMap& f, std::span<const double> x, double h) {
  const std::size_t dim = x.size();
  if (dim == 0 || dim > 256) throw InputError("numeric_jacobian_logdet: dimension must be in [1, 256]");
  if (!(h > 0.0)) throw InputError("numeric_jacobian_logdet: step must be positive");
  Eigen::MatrixXd jacobian(dim, dim);
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t j = 0; j < dim; ++j) {
    probe[j] = x[j] + h;
    const std::vector<double> plus = f(probe);
    probe[j] = x[j] - h;
    const std::vector<double> minus = f(probe);
    probe[j] = x[j];
    if (plus.size() != dim || minus.size() != dim) {
      throw InputError("numeric_jacobian_logdet: map is not dimension-preserving");
    }
    for (std::size_t i = 0; i < dim; ++i) jacobian(i, j) = (plus[i] - minus[i]) / (2.0 * h);
  }
  if (!jacobian.allFinite()) throw NumericError("numeric Jacobian has non-finite entries");
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jacobian);
  const Eigen::MatrixXd& packed = lu.matrixLU();
  double logdet = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double pivot = std::abs(packed(i, i));
    if (!(pivot > 1e-300)) throw NumericError("numeric Jacobian is singular");
    logdet += std::log(pivot);
  }
  return logdet;
}

}  // namespace nflow
