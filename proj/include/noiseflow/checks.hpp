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

// Self-check suites run against a model: invertibility, analytic vs
// numeric-Jacobian log-determinants, analytic vs finite-difference gradients.

#ifndef NOISEFLOW_CHECKS_HPP_
#define NOISEFLOW_CHECKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "noiseflow/model.hpp"

namespace nflow {

struct CheckResult {
  std::string suite;
  std::string target;
  bool passed = false;
  double value = 0.0;      // worst observed error
  double tolerance = 0.0;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 7;
  /// Adds N(0, scale^2) noise to every parameter before checking so
  /// identity-initialized layers are exercised away from their init.
  double perturb_scale = 0.1;
  std::size_t round_trips = 100;
  double round_trip_tolerance = 1e-9;
  Shape round_trip_shape{4, 4, 4};
  Shape logdet_shape{4, 4, 4};  // D = 64
  std::size_t logdet_trials = 3;
  double jacobian_step = 1e-5;
  double logdet_tolerance = 1e-3;
  Shape gradient_shape{4, 4, 4};
  std::size_t gradient_batch = 4;
  double gradient_step = 1e-5;
  double gradient_tolerance = 1e-4;
  /// Gradient probes with a coupling ReLU pre-activation closer than this to
  /// zero are redrawn; central differences straddling the kink are invalid.
  double kink_margin = 1e-4;
  std::size_t max_redraws = 5000;
};

/// Random conditioning context drawn from the model's ISO set and cameras.
ConditioningContext random_context(const FlowModel& model, const Shape& shape, RngStream& rng,
                                   bool allow_gain_amplified = true);
void perturb_parameters(FlowModel& model, double scale, RngStream& rng);

/// Smallest |ReLU pre-activation| over every coupling layer when `noise` is
/// pushed through the inverse; +inf for models without couplings.
double kink_distance(const FlowModel& model, const Patch& noise, const ConditioningContext& ctx);

std::vector<CheckResult> check_invertibility(const FlowModel& model, const CheckOptions& options);
std::vector<CheckResult> check_logdet(const FlowModel& model, const CheckOptions& options);
std::vector<CheckResult> check_gradients(const FlowModel& model, const CheckOptions& options);
std::vector<CheckResult> run_all_checks(const FlowModel& model, const CheckOptions& options);

std::string format_check_table(const std::vector<CheckResult>& results);

}  // namespace nflow

#endif  // NOISEFLOW_CHECKS_HPP_
