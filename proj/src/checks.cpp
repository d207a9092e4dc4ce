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

#include "noiseflow/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace nflow {

namespace {

// Typical magnitude of raw-domain noise on [0, 1] images.
constexpr double kNoiseScale = 0.05;

Patch random_patch(const Shape& shape, RngStream& rng, double scale) {
  Patch p(shape);
  for (double& v : p.values()) v = scale * rng.normal();
  return p;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double norm2(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

// Runs `body` and turns library errors into a failed result.
template <typename Body>
CheckResult guarded(const std::string& suite, const std::string& target, double tolerance,
                    Body&& body) {
  CheckResult result{suite, target, false, 0.0, tolerance, ""};
  try {
    result.value = body();
    result.passed = std::isfinite(result.value) && result.value < tolerance;
    if (!std::isfinite(result.value)) result.detail = "non-finite error";
  } catch (const Error& e) {
    result.value = std::numeric_limits<double>::infinity();
    result.detail = e.what();
  }
  return result;
}

FlowModel perturbed_copy(const FlowModel& model, const CheckOptions& options, std::uint64_t stream) {
  FlowModel copy = model;
  if (options.perturb_scale > 0.0) {
    RngStream rng(options.seed, stream);
    perturb_parameters(copy, options.perturb_scale, rng);
  }
  return copy;
}

}  // namespace

ConditioningContext random_context(const FlowModel& model, const Shape& shape, RngStream& rng,
                                   bool allow_gain_amplified) {
  ConditioningContext ctx;
  ctx.clean = Patch(shape);
  for (double& v : ctx.clean.values()) v = rng.uniform();
  const auto& isos = model.config().iso_set;
  ctx.iso = isos[rng.uniform_index(isos.size())];
  ctx.camera_id = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(model.config().camera_count)));
  ctx.clean_is_gain_amplified =
      allow_gain_amplified && model.gain_layer() != nullptr && rng.uniform() < 0.5;
  return ctx;
}

void perturb_parameters(FlowModel& model, double scale, RngStream& rng) {
  ParamStore& params = model.params();
  // The coupling output stage sums over the hidden units; shrink its noise so
  // the perturbed scale logits stay O(scale).
  const double w2_scale = scale / std::sqrt(static_cast<double>(model.config().hidden_width));
  for (std::size_t k = 0; k < params.entry_count(); ++k) {
    const bool output_stage = params[k].name.ends_with(".coupling.w2");
    for (double& v : params[k].value) v += (output_stage ? w2_scale : scale) * rng.normal();
  }
}

double kink_distance(const FlowModel& model, const Patch& noise, const ConditioningContext& ctx) {
  const ConditioningContext latent = model.latent_context(ctx);
  Patch x = noise;
  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    const Bijection& layer = model.layer(k);
    if (const auto* coupling = dynamic_cast<const AffineCouplingLayer*>(&layer)) {
      smallest = std::min(smallest, coupling->min_abs_preactivation(x.values(), x.shape(), model.params()));
    }
    layer.inverse(x.values(), x.shape(), latent, model.params());
  }
  return smallest;
}

std::vector<CheckResult> check_invertibility(const FlowModel& model, const CheckOptions& options) {
  std::vector<CheckResult> results;
  const FlowModel probe = perturbed_copy(model, options, 1);
  const Shape shape = options.round_trip_shape;
  for (std::size_t k = 0; k < probe.layer_count(); ++k) {
    const Bijection& layer = probe.layer(k);
    results.push_back(guarded("round-trip", layer.name(), options.round_trip_tolerance, [&] {
      RngStream rng(options.seed, 100 + k);
      double worst = 0.0;
      for (std::size_t t = 0; t < options.round_trips; ++t) {
        const ConditioningContext ctx = probe.latent_context(random_context(probe, shape, rng));
        const Patch x = random_patch(shape, rng, 1.0);
        const auto [y, ld_fwd] = layer.forward(x, ctx, probe.params());
        const auto [x_back, ld_inv] = layer.inverse(y, ctx, probe.params());
        worst = std::max({worst, max_abs_diff(x.values(), x_back.values()), std::abs(ld_fwd + ld_inv)});
      }
      return worst;
    }));
  }
  results.push_back(guarded("round-trip", "model", options.round_trip_tolerance, [&] {
    RngStream rng(options.seed, 99);
    double worst = 0.0;
    for (std::size_t t = 0; t < options.round_trips; ++t) {
      const ConditioningContext ctx = random_context(probe, shape, rng);
      const Patch n = random_patch(shape, rng, kNoiseScale);
      double ld_fwd = 0.0, ld_inv = 0.0;
      const Patch z = probe.inverse(n, ctx, &ld_inv);
      const Patch n_back = probe.forward(z, ctx, &ld_fwd);
      worst = std::max({worst, max_abs_diff(n.values(), n_back.values()), std::abs(ld_fwd + ld_inv)});
    }
    return worst;
  }));
  return results;
}

std::vector<CheckResult> check_logdet(const FlowModel& model, const CheckOptions& options) {
  std::vector<CheckResult> results;
  const FlowModel probe = perturbed_copy(model, options, 2);
  const Shape shape = options.logdet_shape;
  for (std::size_t k = 0; k < probe.layer_count(); ++k) {
    const Bijection& layer = probe.layer(k);
    results.push_back(guarded("log-det", layer.name(), options.logdet_tolerance, [&] {
      RngStream rng(options.seed, 200 + k);
      double worst = 0.0;
      for (std::size_t t = 0; t < options.logdet_trials; ++t) {
        const ConditioningContext ctx = probe.latent_context(random_context(probe, shape, rng));
        const Patch x = random_patch(shape, rng, 1.0);
        const double analytic = layer.forward(x, ctx, probe.params()).second;
        const double numeric = numeric_jacobian_logdet(
            [&](std::span<const double> v) {
              Patch p(shape, std::vector<double>(v.begin(), v.end()));
              return layer.forward(p, ctx, probe.params()).first.data();
            },
            x.values(), options.jacobian_step);
        worst = std::max(worst, std::abs(analytic - numeric));
      }
      return worst;
    }));
  }
  results.push_back(guarded("log-det", "model", options.logdet_tolerance, [&] {
    RngStream rng(options.seed, 199);
    double worst = 0.0;
    for (std::size_t t = 0; t < options.logdet_trials; ++t) {
      const ConditioningContext ctx = random_context(probe, shape, rng);
      const Patch x = random_patch(shape, rng, 1.0);
      double analytic = 0.0;
      probe.forward(x, ctx, &analytic);
      const double numeric = numeric_jacobian_logdet(
          [&](std::span<const double> v) {
            Patch p(shape, std::vector<double>(v.begin(), v.end()));
            return probe.forward(p, ctx).data();
          },
          x.values(), options.jacobian_step);
      worst = std::max(worst, std::abs(analytic - numeric));
    }
    return worst;
  }));
  return results;
}

std::vector<CheckResult> check_gradients(const FlowModel& model, const CheckOptions& options) {
  FlowModel probe = perturbed_copy(model, options, 3);
  const Shape shape = options.gradient_shape;

  struct Item {
    Patch noise;
    ConditioningContext ctx;
  };
  std::vector<Item> batch;
  RngStream rng(options.seed, 300);
  std::vector<CheckResult> results;
  std::vector<double> analytic(probe.param_count(), 0.0);
  std::vector<double> numeric;
  try {
    std::size_t redraws = 0;
    while (batch.size() < options.gradient_batch) {
      ConditioningContext ctx = random_context(probe, shape, rng);
      Patch noise = random_patch(shape, rng, kNoiseScale);
      if (kink_distance(probe, noise, ctx) < options.kink_margin) {
        if (++redraws > options.max_redraws) {
          throw NumericError("no gradient probe clear of ReLU kinks after " +
                             std::to_string(options.max_redraws) + " draws");
        }
        continue;
      }
      batch.push_back({std::move(noise), std::move(ctx)});
    }
    const double scale =
        1.0 / (static_cast<double>(batch.size()) * static_cast<double>(shape.size()));
    for (const auto& item : batch) probe.nll_with_grad(item.noise, item.ctx, analytic, scale);
    const LossFn loss = [&](const ParamStore&) {
      double total = 0.0;
      for (const auto& item : batch) total += probe.nll(item.noise, item.ctx).total;
      return total * scale;
    };
    numeric = finite_diff_gradient(loss, probe.params(), options.gradient_step);
  } catch (const Error& e) {
    results.push_back({"gradient", "model", false, std::numeric_limits<double>::infinity(),
                       options.gradient_tolerance, e.what()});
    return results;
  }

  for (const auto& entry : probe.params().entries()) {
    const std::span<const double> a(analytic.data() + entry.offset, entry.size());
    const std::span<const double> n(numeric.data() + entry.offset, entry.size());
    std::vector<double> diff(entry.size());
    for (std::size_t i = 0; i < entry.size(); ++i) diff[i] = a[i] - n[i];
    const double denom = std::max({norm2(a), norm2(n), 1e-8});
    const double rel = norm2(diff) / denom;
    CheckResult r{"gradient", entry.name, rel < options.gradient_tolerance, rel,
                  options.gradient_tolerance, ""};
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<CheckResult> run_all_checks(const FlowModel& model, const CheckOptions& options) {
  std::vector<CheckResult> all = check_invertibility(model, options);
  for (auto&& r : check_logdet(model, options)) all.push_back(std::move(r));
  for (auto&& r : check_gradients(model, options)) all.push_back(std::move(r));
  return all;
}

std::string format_check_table(const std::vector<CheckResult>& results) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-11s %-20s %-6s %12s %10s\n", "suite", "target", "status",
                "error", "tolerance");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-11s %-20s %-6s %12.3e %10.1e", r.suite.c_str(),
                  r.target.c_str(), r.passed ? "PASS" : "FAIL", r.value, r.tolerance);
    out << line;
    if (!r.detail.empty()) out << "  " << r.detail;
    out << '\n';
  }
  return out.str();
}

}  // namespace nflow
