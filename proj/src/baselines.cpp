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

#include "noiseflow/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nflow {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

void GaussianFitter::add(double value) {
  // Welford update.
  ++count_;
  const double delta = value - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (value - mean_);
}

void GaussianFitter::add(std::span<const double> values) {
  for (double v : values) add(v);
}

void GaussianFitter::add(std::span<const float> values) {
  for (float v : values) add(static_cast<double>(v));
}

GaussianModel GaussianFitter::finish() const {
  if (count_ < 2) throw InputError("Gaussian fit needs at least two noise values");
  const double sigma2 = m2_ / static_cast<double>(count_);
  if (!(sigma2 > 0.0)) throw InputError("Gaussian fit is degenerate: all noise values identical");
  if (std::abs(mean_) > kMaxNoiseMean) {
    throw InputError("noise mean " + std::to_string(mean_) +
                     " exceeds the zero-mean tolerance; check the noise layers");
  }
  return {sigma2, mean_, count_};
}

GaussianModel gaussian_fit(std::span<const double> values) {
  GaussianFitter fitter;
  fitter.add(values);
  return fitter.finish();
}

double gaussian_nll(const GaussianModel& model, const Patch& noise) {
  const double var = std::max(model.sigma2, kVarianceFloor);
  double sq = 0.0;
  for (double n : noise.values()) sq += n * n;
  const double dim = static_cast<double>(noise.size());
  return 0.5 * (kLog2Pi + std::log(var)) + sq / (2.0 * var * dim);
}

Patch gaussian_sample(const GaussianModel& model, const Shape& shape, RngStream& rng) {
  const double stddev = std::sqrt(std::max(model.sigma2, kVarianceFloor));
  Patch out(shape);
  for (double& v : out.values()) v = stddev * rng.normal();
  return out;
}

double nlf_nll(const NlfModel& model, const Patch& noise, const Patch& clean) {
  if (noise.shape() != clean.shape()) throw InputError("nlf_nll: noise and clean shapes differ");
  const auto n = noise.values();
  const auto c = clean.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double var = model.beta1 * c[i] + model.beta2;
    if (!(var > 0.0)) {
      throw InputError("NLF variance is not positive at element " + std::to_string(i));
    }
    const double v = std::max(var, kVarianceFloor);
    total += 0.5 * (kLog2Pi + std::log(v)) + n[i] * n[i] / (2.0 * v);
  }
  return total / static_cast<double>(n.size());
}

Patch nlf_sample(const NlfModel& model, const Patch& clean, RngStream& rng) {
  Patch out(clean.shape());
  const auto c = clean.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double var = std::max(model.beta1 * c[i] + model.beta2, kVarianceFloor);
    o[i] = std::sqrt(var) * rng.normal();
  }
  return out;
}

}  // namespace nflow
