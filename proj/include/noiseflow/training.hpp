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

// Maximum-likelihood training of a FlowModel with minibatch Adam.

#ifndef NOISEFLOW_TRAINING_HPP_
#define NOISEFLOW_TRAINING_HPP_

#include <cstdint>
#include <functional>

#include "noiseflow/data.hpp"
#include "noiseflow/evaluation.hpp"
#include "noiseflow/model.hpp"

namespace nflow {

struct TrainConfig {
  AdamConfig adam;
  /// Learning rate multiplier applied after every epoch.
  double lr_decay = 1.0;
  /// Learning-rate multiplier for the unconditional flow steps (coupling and
  /// channel-mix parameters). Their scale logits sum many weights, so at a
  /// shared rate they react much faster than the S and G scalars.
  double flow_step_lr_scale = 1.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  /// Steps between test-set evaluations (0: only after each epoch).
  std::size_t test_interval = 0;
};

/// Raised when the training loss or a gradient turns non-finite. The model
/// has already been restored to the last parameters with a finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, long step) : NumericError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

using StepCallback = std::function<void(const TraceRow&)>;

/// Minimizes the mean per-dimension NLL of `train`. Per-patch gradients are
/// computed in parallel and merged in batch order, so results do not depend
/// on the worker count.
TrainingTrace train(FlowModel& model, const PatchDataset& train, const PatchDataset* test,
                    const TrainConfig& config, const StepCallback& on_step = {});

/// Mean per-dimension NLL of every record in `dataset`.
double dataset_nll(const FlowModel& model, const PatchDataset& dataset);

/// Zero-mean Gaussian MLE over all noise values of `dataset`.
GaussianModel fit_gaussian(const PatchDataset& dataset);

/// Snapshot of the interpretable parameters (b1, b2, v, w) at `step`.
TraceRow trace_row(const FlowModel& model, long step, double train_nll, double test_nll);
TrainingTrace empty_trace(const FlowModel& model);

}  // namespace nflow

#endif  // NOISEFLOW_TRAINING_HPP_
