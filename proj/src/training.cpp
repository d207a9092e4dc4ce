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

#include "noiseflow/training.hpp"

#include <cmath>
#include <limits>

#include "noiseflow/parallel.hpp"

namespace nflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TrainingTrace empty_trace(const FlowModel& model) {
  TrainingTrace trace;
  trace.has_signal = model.signal_layer() != nullptr;
  if (const GainLayer* gain = model.gain_layer()) {
    trace.iso_set = gain->iso_set();
    trace.camera_columns = gain->camera_aware() ? gain->camera_count() : 0;
  }
  return trace;
}

TraceRow trace_row(const FlowModel& model, long step, double train_nll, double test_nll) {
  TraceRow row;
  row.step = step;
  row.train_nll = train_nll;
  row.test_nll = test_nll;
  row.b1 = kNaN;
  row.b2 = kNaN;
  const ParamStore& params = model.params();
  if (model.signal_layer()) {
    row.b1 = params.at("signal.b1").value[0];
    row.b2 = params.at("signal.b2").value[0];
  }
  if (const GainLayer* gain = model.gain_layer()) {
    row.v = params.at("gain.v").value;
    if (gain->camera_aware()) row.w = params.at("gain.w").value;
  }
  return row;
}

double dataset_nll(const FlowModel& model, const PatchDataset& dataset) {
  if (dataset.records.empty()) throw InputError("dataset_nll: empty dataset");
  std::vector<double> per_record(dataset.records.size());
  parallel_for(dataset.records.size(), [&](std::size_t i) {
    const auto& rec = dataset.records[i];
    per_record[i] = model.nll(rec.noise_f64(), rec.context()).per_dim;
  });
  double total = 0.0;
  for (double v : per_record) total += v;
  return total / static_cast<double>(per_record.size());
}

GaussianModel fit_gaussian(const PatchDataset& dataset) {
  GaussianFitter fitter;
  for (const auto& rec : dataset.records) fitter.add(rec.noise.values());
  return fitter.finish();
}

TrainingTrace train(FlowModel& model, const PatchDataset& train_set, const PatchDataset* test,
                    const TrainConfig& config, const StepCallback& on_step) {
  if (config.batch_size == 0) throw InputError("batch size must be positive");
  TrainingTrace trace = empty_trace(model);
  if (config.epochs == 0) return trace;
  if (train_set.records.empty()) throw InputError("training set is empty");
  if (train_set.shape.channels != model.config().channels) {
    throw InputError("training data has " + std::to_string(train_set.shape.channels) +
                     " channels; the model expects " + std::to_string(model.config().channels));
  }

  ParamStore& params = model.params();
  const std::size_t n_params = params.total_count();
  const double dim = static_cast<double>(train_set.shape.size());
  RngStream shuffle_rng(config.seed, 0x5348554646ULL);
  AdamConfig adam = config.adam;
  long step = 0;
  std::vector<double> last_good = params.flat_values();
  if (!(config.flow_step_lr_scale > 0.0) || !std::isfinite(config.flow_step_lr_scale)) {
    throw InputError("flow_step_lr_scale must be positive");
  }
  std::vector<double> lr_scale(params.entry_count(), 1.0);
  for (std::size_t k = 0; k < params.entry_count(); ++k) {
    if (params[k].name.starts_with("step")) lr_scale[k] = config.flow_step_lr_scale;
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = minibatches(train_set.records.size(), config.batch_size, shuffle_rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      ++step;
      std::vector<std::vector<double>> grads(batch.size());
      std::vector<double> losses(batch.size());
      const double scale = 1.0 / (static_cast<double>(batch.size()) * dim);
      double batch_nll = 0.0;
      try {
        parallel_for(batch.size(), [&](std::size_t i) {
          const auto& rec = train_set.records[batch[i]];
          grads[i].assign(n_params, 0.0);
          losses[i] = model.nll_with_grad(rec.noise_f64(), rec.context(), grads[i], scale).per_dim;
        });
        params.zero_grad();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          params.accumulate_grads(grads[i]);
          batch_nll += losses[i];
        }
        batch_nll /= static_cast<double>(batch.size());
        if (!std::isfinite(batch_nll)) throw NumericError("non-finite training NLL");
        clip_grad_norm(params, adam.clip);
        adam_step(params, adam, step, lr_scale);
        const std::vector<double> updated = params.flat_values();
        if (!all_finite(updated)) throw NumericError("non-finite parameters after Adam step");
        last_good = updated;
      } catch (const InputError&) {
        throw;
      } catch (const NumericError& e) {
        params.set_flat_values(last_good);
        throw DivergenceError(std::string("training diverged at step ") + std::to_string(step) +
                                  ": " + e.what(),
                              step);
      }

      const bool last_in_epoch = b + 1 == batches.size();
      double test_nll = kNaN;
      if (test != nullptr && !test->records.empty() &&
          ((config.test_interval > 0 && step % static_cast<long>(config.test_interval) == 0) ||
           last_in_epoch)) {
        test_nll = dataset_nll(model, *test);
      }
      trace.rows.push_back(trace_row(model, step, batch_nll, test_nll));
      if (on_step) on_step(trace.rows.back());
    }
    adam.lr *= config.lr_decay;
  }
  return trace;
}

}  // namespace nflow
