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

// Comparison noise models: homoscedastic Gaussian (MLE variance) and the
// heteroscedastic noise level function var(n) = beta1 * I + beta2.

#ifndef NOISEFLOW_BASELINES_HPP_
#define NOISEFLOW_BASELINES_HPP_

#include <cstddef>
#include <span>

#include "noiseflow/numerics.hpp"

namespace nflow {

/// Floor applied to every variance that appears in an NLL denominator.
inline constexpr double kVarianceFloor = 1e-12;
/// Largest empirical mean tolerated when fitting the zero-mean Gaussian.
inline constexpr double kMaxNoiseMean = 0.01;

struct GaussianModel {
  double sigma2 = 1.0;
  /// Empirical mean seen during the fit (reported, not used by the model).
  double mean = 0.0;
  std::size_t count = 0;
};

/// Streaming population-moment accumulator for the Gaussian fit.
class GaussianFitter {
 public:
  void add(double value);
  void add(std::span<const double> values);
  void add(std::span<const float> values);
  /// sigma2 = E[n^2] - E[n]^2. Throws InputError for fewer than two values,
  /// a zero variance, or |mean| > kMaxNoiseMean.
  GaussianModel finish() const;

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

GaussianModel gaussian_fit(std::span<const double> values);

/// Mean over elements of 0.5 ln(2 pi sigma^2) + n^2 / (2 sigma^2).
double gaussian_nll(const GaussianModel& model, const Patch& noise);
Patch gaussian_sample(const GaussianModel& model, const Shape& shape, RngStream& rng);

struct NlfModel {
  double beta1 = 0.0;
  double beta2 = 0.0;
};

/// Mean over elements of 0.5 ln(2 pi v_i) + n_i^2 / (2 v_i) with
/// v_i = beta1 * I_i + beta2. Throws InputError naming the first element
/// whose variance is not positive.
double nlf_nll(const NlfModel& model, const Patch& noise, const Patch& clean);
Patch nlf_sample(const NlfModel& model, const Patch& clean, RngStream& rng);

}  // namespace nflow

#endif  // NOISEFLOW_BASELINES_HPP_
