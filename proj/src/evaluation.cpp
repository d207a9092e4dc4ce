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

#include "noiseflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "noiseflow/parallel.hpp"

namespace nflow {

std::vector<double> NoiseHistogram::edges() const {
  std::vector<double> out(counts.size() + 1);
  const double width = 2.0 * range / static_cast<double>(counts.size());
  for (std::size_t i = 0; i <= counts.size(); ++i) out[i] = -range + width * static_cast<double>(i);
  return out;
}

NoiseHistogram histogram(std::span<const double> values, double range, std::size_t bins) {
  if (!(range > 0.0)) throw InputError("histogram range must be positive");
  if (bins < 2) throw InputError("histogram needs at least two bins");
  NoiseHistogram h;
  h.range = range;
  h.counts.assign(bins, 0);
  const double scale = static_cast<double>(bins) / (2.0 * range);
  for (double v : values) {
    if (std::isnan(v)) throw NumericError("histogram input contains NaN");
    if (v < -range || v > range) ++h.clipped;
    const double pos = std::floor((v + range) * scale);
    std::size_t bin;
    if (pos < 0.0) {
      bin = 0;
    } else if (pos >= static_cast<double>(bins)) {
      bin = bins - 1;
    } else {
      bin = static_cast<std::size_t>(pos);
    }
    ++h.counts[bin];
    ++h.total;
  }
  return h;
}

double kl_divergence(const NoiseHistogram& p, const NoiseHistogram& q, double epsilon) {
  if (p.bins() != q.bins() || p.range != q.range) {
    throw InputError("kl_divergence: histograms have different bin edges");
  }
  if (p.total == 0 || q.total == 0) throw InputError("kl_divergence: empty histogram");
  const double norm = 1.0 + epsilon * static_cast<double>(p.bins());
  double kl = 0.0;
  for (std::size_t i = 0; i < p.bins(); ++i) {
    const double pi = (static_cast<double>(p.counts[i]) / static_cast<double>(p.total) + epsilon) / norm;
    const double qi = (static_cast<double>(q.counts[i]) / static_cast<double>(q.total) + epsilon) / norm;
    kl += pi * std::log(pi / qi);
  }
  return std::max(kl, 0.0);
}

double likelihood_improvement(double nll_baseline, double nll_model) {
  return std::exp(nll_baseline - nll_model) - 1.0;
}

// ---------------------------------------------------------------------------

int nearest_iso(const std::vector<int>& iso_set, int iso) {
  if (iso_set.empty()) throw InputError("nearest_iso: empty ISO set");
  int best = iso_set.front();
  for (int candidate : iso_set) {
    const int d = std::abs(candidate - iso);
    const int db = std::abs(best - iso);
    if (d < db || (d == db && candidate < best)) best = candidate;
  }
  return best;
}

FlowNoiseModel::FlowNoiseModel(const FlowModel& model, bool nearest, std::string name)
    : model_(model), nearest_iso_(nearest), name_(std::move(name)) {}

ConditioningContext FlowNoiseModel::context(const PatchRecord& record) const {
  ConditioningContext ctx = record.context();
  const auto& isos = model_.config().iso_set;
  if (nearest_iso_ && std::find(isos.begin(), isos.end(), ctx.iso) == isos.end()) {
    ctx.iso = nearest_iso(isos, ctx.iso);
  }
  return ctx;
}

double FlowNoiseModel::nll_per_dim(const PatchRecord& record) const {
  return model_.nll(record.noise_f64(), context(record)).per_dim;
}

Patch FlowNoiseModel::sample(const PatchRecord& record, RngStream& rng) const {
  return model_.sample(context(record), rng);
}

double GaussianNoiseModel::nll_per_dim(const PatchRecord& record) const {
  return gaussian_nll(model_, record.noise_f64());
}

Patch GaussianNoiseModel::sample(const PatchRecord& record, RngStream& rng) const {
  return gaussian_sample(model_, record.noise.shape(), rng);
}

NlfModel NlfNoiseModel::coefficients(const PatchRecord& record) {
  if (!record.has_nlf()) {
    throw InputError("the NLF baseline needs per-record NLF coefficients, which this record lacks");
  }
  return {static_cast<double>(record.nlf_beta1), static_cast<double>(record.nlf_beta2)};
}

double NlfNoiseModel::nll_per_dim(const PatchRecord& record) const {
  return nlf_nll(coefficients(record), record.noise_f64(), record.clean.cast<double>());
}

Patch NlfNoiseModel::sample(const PatchRecord& record, RngStream& rng) const {
  return nlf_sample(coefficients(record), record.clean.cast<double>(), rng);
}

// ---------------------------------------------------------------------------

namespace {

ModelSummary summarize(const std::string& name, const std::vector<const RecordResult*>& rows,
                       std::size_t model_index) {
  ModelSummary s;
  s.name = name;
  s.records = rows.size();
  if (rows.empty()) return s;
  double nll = 0.0, kl = 0.0;
  for (const auto* r : rows) {
    nll += r->nll_per_dim[model_index];
    kl += r->kl[model_index];
  }
  const double n = static_cast<double>(rows.size());
  s.nll_per_dim = nll / n;
  s.kl_mean = kl / n;
  double var = 0.0;
  for (const auto* r : rows) var += (r->kl[model_index] - s.kl_mean) * (r->kl[model_index] - s.kl_mean);
  s.kl_std = std::sqrt(var / n);
  return s;
}

}  // namespace

EvalReport evaluate(std::span<const NoiseModel* const> models, const PatchDataset& test,
                    const EvalSettings& settings) {
  if (settings.samples_per_record == 0) throw InputError("samples_per_record must be positive");
  EvalReport report;
  report.settings = settings;
  report.provenance["histogram_pooling"] = "all pixels and channels of a record";
  if (models.empty()) return report;

  const std::size_t m = models.size();
  report.records.resize(test.records.size());
  parallel_for(test.records.size(), [&](std::size_t r) {
    const PatchRecord& rec = test.records[r];
    RecordResult& out = report.records[r];
    out.index = r;
    out.camera = rec.camera_id;
    out.iso = static_cast<int>(rec.iso);
    out.nll_per_dim.resize(m);
    out.kl.resize(m);
    const Patch real = rec.noise_f64();
    const NoiseHistogram real_hist = histogram(real.values(), settings.range, settings.bins);
    const RngStream record_rng(settings.seed, r);
    for (std::size_t k = 0; k < m; ++k) {
      try {
        out.nll_per_dim[k] = models[k]->nll_per_dim(rec);
        RngStream rng = record_rng.split(k);
        double kl = 0.0;
        for (std::size_t s = 0; s < settings.samples_per_record; ++s) {
          const Patch sample = models[k]->sample(rec, rng);
          kl += kl_divergence(real_hist, histogram(sample.values(), settings.range, settings.bins),
                              settings.epsilon);
        }
        out.kl[k] = kl / static_cast<double>(settings.samples_per_record);
      } catch (const InputError& e) {
        throw InputError("record " + std::to_string(r) + ", model " + models[k]->name() + ": " +
                         e.what());
      } catch (const Error& e) {
        throw NumericError("record " + std::to_string(r) + ", model " + models[k]->name() + ": " +
                           e.what());
      }
    }
  });

  std::vector<const RecordResult*> all;
  std::map<std::pair<int, int>, std::vector<const RecordResult*>> by_cell;
  for (const auto& row : report.records) {
    all.push_back(&row);
    by_cell[{row.camera, row.iso}].push_back(&row);
  }
  for (std::size_t k = 0; k < m; ++k) report.models.push_back(summarize(models[k]->name(), all, k));
  for (const auto& [key, rows] : by_cell) {
    CellSummary cell;
    cell.camera = key.first;
    cell.iso = key.second;
    for (std::size_t k = 0; k < m; ++k) cell.models.push_back(summarize(models[k]->name(), rows, k));
    report.cells.push_back(std::move(cell));
  }
  for (std::size_t k = 1; k < m; ++k) {
    Improvement imp;
    imp.model = report.models[0].name;
    imp.baseline = report.models[k].name;
    imp.delta_nll = report.models[k].nll_per_dim - report.models[0].nll_per_dim;
    imp.likelihood_improvement =
        likelihood_improvement(report.models[k].nll_per_dim, report.models[0].nll_per_dim);
    report.improvements.push_back(imp);
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json summary_json(const ModelSummary& s) {
  return {{"name", s.name},
          {"nll_per_dim", s.nll_per_dim},
          {"kl_mean", s.kl_mean},
          {"kl_std", s.kl_std},
          {"records", s.records}};
}

ModelSummary summary_from_json(const nlohmann::json& j) {
  ModelSummary s;
  s.name = j.at("name").get<std::string>();
  s.nll_per_dim = j.at("nll_per_dim").get<double>();
  s.kl_mean = j.at("kl_mean").get<double>();
  s.kl_std = j.at("kl_std").get<double>();
  s.records = j.at("records").get<std::size_t>();
  return s;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["settings"] = {{"histogram_range", report.settings.range},
                   {"histogram_bins", report.settings.bins},
                   {"kl_epsilon", report.settings.epsilon},
                   {"samples_per_record", report.settings.samples_per_record},
                   {"seed", report.settings.seed}};
  j["models"] = nlohmann::json::array();
  for (const auto& s : report.models) j["models"].push_back(summary_json(s));
  j["improvements"] = nlohmann::json::array();
  for (const auto& imp : report.improvements) {
    j["improvements"].push_back({{"model", imp.model},
                                 {"baseline", imp.baseline},
                                 {"delta_nll", imp.delta_nll},
                                 {"likelihood_improvement", imp.likelihood_improvement},
                                 {"likelihood_improvement_percent", 100.0 * imp.likelihood_improvement}});
  }
  j["breakdown"] = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json c = {{"camera", cell.camera}, {"iso", cell.iso}};
    c["models"] = nlohmann::json::array();
    for (const auto& s : cell.models) c["models"].push_back(summary_json(s));
    j["breakdown"].push_back(std::move(c));
  }
  j["records"] = nlohmann::json::array();
  for (const auto& r : report.records) {
    j["records"].push_back({{"index", r.index},
                            {"camera", r.camera},
                            {"iso", r.iso},
                            {"nll_per_dim", r.nll_per_dim},
                            {"kl", r.kl}});
  }
  j["provenance"] = report.provenance;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
    throw FormatError("unsupported report schema version");
  }
  EvalReport report;
  const auto& s = j.at("settings");
  report.settings.range = s.at("histogram_range").get<double>();
  report.settings.bins = s.at("histogram_bins").get<std::size_t>();
  report.settings.epsilon = s.at("kl_epsilon").get<double>();
  report.settings.samples_per_record = s.at("samples_per_record").get<std::size_t>();
  report.settings.seed = s.at("seed").get<std::uint64_t>();
  for (const auto& m : j.at("models")) report.models.push_back(summary_from_json(m));
  for (const auto& imp : j.at("improvements")) {
    report.improvements.push_back({imp.at("model").get<std::string>(),
                                   imp.at("baseline").get<std::string>(),
                                   imp.at("delta_nll").get<double>(),
                                   imp.at("likelihood_improvement").get<double>()});
  }
  for (const auto& c : j.at("breakdown")) {
    CellSummary cell;
    cell.camera = c.at("camera").get<int>();
    cell.iso = c.at("iso").get<int>();
    for (const auto& m : c.at("models")) cell.models.push_back(summary_from_json(m));
    report.cells.push_back(std::move(cell));
  }
  for (const auto& r : j.at("records")) {
    RecordResult row;
    row.index = r.at("index").get<std::size_t>();
    row.camera = r.at("camera").get<int>();
    row.iso = r.at("iso").get<int>();
    row.nll_per_dim = r.at("nll_per_dim").get<std::vector<double>>();
    row.kl = r.at("kl").get<std::vector<double>>();
    report.records.push_back(std::move(row));
  }
  report.provenance = j.at("provenance");
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "record,camera,iso";
  for (const auto& m : report.models) out << ',' << m.name << "_nll_per_dim," << m.name << "_kl";
  out << '\n';
  for (const auto& r : report.records) {
    out << r.index << ',' << r.camera << ',' << r.iso;
    for (std::size_t k = 0; k < r.nll_per_dim.size(); ++k) out << ',' << r.nll_per_dim[k] << ',' << r.kl[k];
    out << '\n';
  }
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::Json) {
    write_text(path, to_json(report).dump(2) + "\n");
  } else {
    write_text(path, report_csv(report));
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> TrainingTrace::columns() const {
  std::vector<std::string> cols = {"step", "train_nll", "test_nll", "b1", "b2"};
  for (int iso : iso_set) cols.push_back("v_" + std::to_string(iso));
  for (int m = 0; m < camera_columns; ++m) cols.push_back("w_" + std::to_string(m));
  return cols;
}

std::string plot_data_csv(const TrainingTrace& trace) {
  std::ostringstream out;
  out.precision(17);
  const auto cols = trace.columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  auto value = [&](double v) {
    if (std::isfinite(v)) out << v;
  };
  for (const auto& row : trace.rows) {
    out << row.step << ',';
    value(row.train_nll);
    out << ',';
    value(row.test_nll);
    out << ',';
    if (trace.has_signal) value(row.b1);
    out << ',';
    if (trace.has_signal) value(row.b2);
    for (std::size_t i = 0; i < trace.iso_set.size(); ++i) {
      out << ',';
      if (i < row.v.size()) value(row.v[i]);
    }
    for (int m = 0; m < trace.camera_columns; ++m) {
      out << ',';
      if (static_cast<std::size_t>(m) < row.w.size()) value(row.w[static_cast<std::size_t>(m)]);
    }
    out << '\n';
  }
  return out.str();
}

void emit_plot_data(const TrainingTrace& trace, const std::filesystem::path& path) {
  write_text(path, plot_data_csv(trace));
}

}  // namespace nflow
