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

// NLL aggregation, marginal-KL histogram comparison, report and plot-series
// emission.

#ifndef NOISEFLOW_EVALUATION_HPP_
#define NOISEFLOW_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noiseflow/baselines.hpp"
#include "noiseflow/data.hpp"
#include "noiseflow/model.hpp"

namespace nflow {

inline constexpr int kReportSchemaVersion = 1;

/// Uniform bins over [-range, range]; out-of-range values land in the end
/// bins and are counted in `clipped`.
struct NoiseHistogram {
  double range = 0.2;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  std::uint64_t clipped = 0;

  std::size_t bins() const { return counts.size(); }
  std::vector<double> edges() const;
};

NoiseHistogram histogram(std::span<const double> values, double range, std::size_t bins);

/// Discrete KL(p || q) in nats. Both histograms are normalized, smoothed by
/// `epsilon` per bin and renormalized. Throws InputError if edges differ.
double kl_divergence(const NoiseHistogram& p, const NoiseHistogram& q, double epsilon = 1e-12);

/// exp(nll_baseline - nll_model) - 1: the relative gain in exp(-NLL).
double likelihood_improvement(double nll_baseline, double nll_model);

// ---------------------------------------------------------------------------
// Models under evaluation

class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  virtual std::string name() const = 0;
  virtual double nll_per_dim(const PatchRecord& record) const = 0;
  virtual Patch sample(const PatchRecord& record, RngStream& rng) const = 0;
};

class FlowNoiseModel final : public NoiseModel {
 public:
  /// With `nearest_iso`, record ISOs outside the model's set are mapped to
  /// the closest configured level (ties go to the lower level).
  explicit FlowNoiseModel(const FlowModel& model, bool nearest_iso = false,
                          std::string name = "noise_flow");
  std::string name() const override { return name_; }
  double nll_per_dim(const PatchRecord& record) const override;
  Patch sample(const PatchRecord& record, RngStream& rng) const override;
  ConditioningContext context(const PatchRecord& record) const;

 private:
  const FlowModel& model_;
  bool nearest_iso_;
  std::string name_;
};

class GaussianNoiseModel final : public NoiseModel {
 public:
  explicit GaussianNoiseModel(GaussianModel model) : model_(model) {}
  std::string name() const override { return "gaussian"; }
  double nll_per_dim(const PatchRecord& record) const override;
  Patch sample(const PatchRecord& record, RngStream& rng) const override;

 private:
  GaussianModel model_;
};

/// Heteroscedastic model using each record's stored NLF coefficients.
class NlfNoiseModel final : public NoiseModel {
 public:
  std::string name() const override { return "nlf"; }
  double nll_per_dim(const PatchRecord& record) const override;
  Patch sample(const PatchRecord& record, RngStream& rng) const override;
  static NlfModel coefficients(const PatchRecord& record);
};

int nearest_iso(const std::vector<int>& iso_set, int iso);

// ---------------------------------------------------------------------------
// Reports

struct EvalSettings {
  double range = 0.2;
  std::size_t bins = 256;
  double epsilon = 1e-12;
  std::size_t samples_per_record = 1;
  std::uint64_t seed = 0;
  friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

struct ModelSummary {
  std::string name;
  double nll_per_dim = 0.0;
  double kl_mean = 0.0;
  double kl_std = 0.0;
  std::size_t records = 0;
  friend bool operator==(const ModelSummary&, const ModelSummary&) = default;
};

struct CellSummary {
  int camera = 0;
  int iso = 0;
  std::vector<ModelSummary> models;
  friend bool operator==(const CellSummary&, const CellSummary&) = default;
};

struct RecordResult {
  std::size_t index = 0;
  int camera = 0;
  int iso = 0;
  std::vector<double> nll_per_dim;  // one per model
  std::vector<double> kl;           // one per model
  friend bool operator==(const RecordResult&, const RecordResult&) = default;
};

struct Improvement {
  std::string model;
  std::string baseline;
  double delta_nll = 0.0;
  double likelihood_improvement = 0.0;
  friend bool operator==(const Improvement&, const Improvement&) = default;
};

struct EvalReport {
  EvalSettings settings;
  std::vector<ModelSummary> models;
  std::vector<CellSummary> cells;
  /// First model against every other one.
  std::vector<Improvement> improvements;
  std::vector<RecordResult> records;
  nlohmann::json provenance = nlohmann::json::object();
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per record: NLL of the real noise under every model, then for each
/// sample draw KL(real histogram || sampled histogram), averaged over draws.
/// Histograms pool all pixels and channels of a record.
EvalReport evaluate(std::span<const NoiseModel* const> models, const PatchDataset& test,
                    const EvalSettings& settings);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& json);

enum class ReportFormat { Json, Csv };

/// JSON: the full report. CSV: one row per record plus a header.
void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
std::string report_csv(const EvalReport& report);

// ---------------------------------------------------------------------------
// Training trace

struct TraceRow {
  long step = 0;
  double train_nll = 0.0;
  /// NaN on steps without a test evaluation.
  double test_nll = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  std::vector<double> v;
  std::vector<double> w;
};

struct TrainingTrace {
  std::vector<int> iso_set;  // v columns
  int camera_columns = 0;    // w columns
  bool has_signal = false;
  std::vector<TraceRow> rows;

  std::vector<std::string> columns() const;
};

/// CSV with columns step, train_nll, test_nll, b1, b2, v_<ISO>..., w_<m>...;
/// missing values are left empty.
void emit_plot_data(const TrainingTrace& trace, const std::filesystem::path& path);
std::string plot_data_csv(const TrainingTrace& trace);

}  // namespace nflow

#endif  // NOISEFLOW_EVALUATION_HPP_
