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
// noiseflow command-line driver.
//
// Exit codes: 0 success, 1 check failure or internal error, 2 usage or
// input error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noiseflow/baselines.hpp"
#include "noiseflow/checks.hpp"
#include "noiseflow/config.hpp"
#include "noiseflow/data.hpp"
#include "noiseflow/evaluation.hpp"
#include "noiseflow/model.hpp"
#include "noiseflow/training.hpp"

namespace fs = std::filesystem;
using namespace nflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string fmt_shape(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

nlohmann::json gaussian_json(const GaussianModel& g) {
  return {{"sigma2", g.sigma2}, {"mean", g.mean}, {"count", g.count}};
}

std::optional<GaussianModel> gaussian_from_metadata(const nlohmann::json& meta) {
  if (!meta.contains("gaussian")) return std::nullopt;
  GaussianModel g;
  const auto& j = meta.at("gaussian");
  g.sigma2 = j.at("sigma2").get<double>();
  g.mean = j.value("mean", 0.0);
  g.count = j.value("count", std::size_t{0});
  return g;
}

void require_conditioning(const FlowModel& model, const PatchDataset& data, bool nearest) {
  const auto& isos = model.config().iso_set;
  for (int iso : data.iso_set) {
    if (!nearest && std::find(isos.begin(), isos.end(), iso) == isos.end()) {
      throw InputError("data ISO " + std::to_string(iso) +
                       " is not in the checkpoint ISO set (use --nearest-iso to map it)");
    }
  }
  if (data.camera_count > model.config().camera_count) {
    throw InputError("data has " + std::to_string(data.camera_count) + " cameras; the checkpoint has " +
                     std::to_string(model.config().camera_count));
  }
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  double train_fraction = 0.0;
  std::string test_out;
};

int run_gen_data(const GenDataArgs& a) {
  SyntheticSpec spec = synthetic_spec_from_json(read_json_file(a.spec));
  if (a.seed) spec.seed = *a.seed;
  const PatchDataset data = generate_synthetic(spec);
  if (a.test_out.empty()) {
    write_dataset(data, a.out);
    std::cout << "wrote " << data.size() << " records of " << fmt_shape(data.shape) << " to " << a.out
              << "\n";
    return kExitOk;
  }
  const DatasetSplit parts = split(data, a.train_fraction, spec.seed);
  write_dataset(parts.train, a.out);
  write_dataset(parts.test, a.test_out);
  std::cout << "wrote " << parts.train.size() << " train records to " << a.out << " and "
            << parts.test.size() << " test records to " << a.test_out << " (" << fmt_shape(data.shape)
            << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string test;
  std::string out;
  std::string trace;
  std::optional<std::string> arch;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> lr_decay;
  std::optional<double> step_lr_scale;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? run_config_from_json(nlohmann::json::object())
                                   : load_run_config(a.config);
  if (a.arch) cfg.arch = *a.arch;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.lr) cfg.train.adam.lr = *a.lr;
  if (a.lr_decay) cfg.train.lr_decay = *a.lr_decay;
  if (a.step_lr_scale) cfg.train.flow_step_lr_scale = *a.step_lr_scale;
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.eval.seed = *a.seed;
  }
  if (!a.data.empty()) cfg.train_data = a.data;
  if (!a.test.empty()) cfg.test_data = a.test;
  cfg = run_config_from_json(to_json(cfg));  // re-validate after overrides
  if (cfg.train_data.empty()) throw InputError("no training data given (--data or data.train)");

  const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) / "model.nflow" : fs::path(a.out);
  const fs::path trace_path = a.trace.empty() ? fs::path(out.string() + ".trace.csv") : fs::path(a.trace);

  const PatchDataset train_set = read_dataset(cfg.train_data);
  std::optional<PatchDataset> test_set;
  if (!cfg.test_data.empty()) test_set = read_dataset(cfg.test_data);

  RngStream init_rng(cfg.train.seed, 0x494E4954ULL);
  FlowModel model = FlowModel::build(model_config(cfg, train_set), init_rng);
  require_conditioning(model, train_set, false);
  if (test_set) require_conditioning(model, *test_set, false);

  nlohmann::json meta = {{"config", to_json(cfg)}, {"arch", model.config().arch.render()},
                         {"param_count", model.param_count()}};
  const GaussianModel gauss = fit_gaussian(train_set);
  meta["gaussian"] = gaussian_json(gauss);

  if (!a.quiet) {
    std::cout << "model " << model.config().arch.render() << " with " << model.param_count()
              << " parameters; " << train_set.size() << " train records";
    if (test_set) std::cout << ", " << test_set->size() << " test records";
    std::cout << "\n";
  }

  TrainingTrace trace;
  const std::size_t steps_per_epoch =
      (train_set.size() + cfg.train.batch_size - 1) / std::max<std::size_t>(cfg.train.batch_size, 1);
  const auto report = [&](const TraceRow& row) {
    if (a.quiet) return;
    const bool epoch_end = steps_per_epoch > 0 && row.step % static_cast<long>(steps_per_epoch) == 0;
    if (!epoch_end && !std::isfinite(row.test_nll)) return;
    std::printf("step %6ld  train_nll %.5f", row.step, row.train_nll);
    if (std::isfinite(row.test_nll)) std::printf("  test_nll %.5f", row.test_nll);
    std::printf("\n");
    std::fflush(stdout);
  };
  try {
    trace = train(model, train_set, test_set ? &*test_set : nullptr, cfg.train, report);
  } catch (const DivergenceError& e) {
    meta["diverged_at_step"] = e.step();
    save(model, out, meta);
    std::cerr << "error: " << e.what() << "\nlast good checkpoint written to " << out.string() << "\n";
    return kExitFailure;
  }
  if (!trace.rows.empty()) meta["final_train_nll"] = trace.rows.back().train_nll;
  if (test_set && cfg.train.epochs > 0) meta["final_test_nll"] = dataset_nll(model, *test_set);
  save(model, out, meta);
  emit_plot_data(trace, trace_path);
  if (!a.quiet) std::cout << "checkpoint written to " << out.string() << "; trace to " << trace_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string baselines = "gaussian,nlf";
  std::string report;
  std::string csv;
  bool nearest_iso = false;
  std::optional<std::size_t> samples_per_record;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> bins;
  std::optional<double> range;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const PatchDataset test = read_dataset(a.data);
  require_conditioning(ck.model, test, a.nearest_iso);

  EvalSettings settings;
  if (ck.metadata.contains("config")) settings = run_config_from_json(ck.metadata.at("config")).eval;
  if (a.samples_per_record) settings.samples_per_record = *a.samples_per_record;
  if (a.seed) settings.seed = *a.seed;
  if (a.bins) settings.bins = *a.bins;
  if (a.range) settings.range = *a.range;
  if (settings.samples_per_record == 0) throw InputError("--samples-per-record must be positive");

  FlowNoiseModel flow(ck.model, a.nearest_iso);
  std::optional<GaussianNoiseModel> gauss;
  std::optional<NlfNoiseModel> nlf;
  std::vector<const NoiseModel*> models{&flow};
  nlohmann::json provenance = {{"checkpoint", a.ckpt},
                               {"data", a.data},
                               {"nearest_iso", a.nearest_iso},
                               {"checkpoint_metadata", ck.metadata}};
  for (const auto& name : split_list(a.baselines)) {
    if (name == "gaussian") {
      auto fit = gaussian_from_metadata(ck.metadata);
      if (!fit) {
        fit = fit_gaussian(test);
        provenance["gaussian_fit_source"] = "evaluation data";
      } else {
        provenance["gaussian_fit_source"] = "training data";
      }
      gauss.emplace(*fit);
      models.push_back(&*gauss);
    } else if (name == "nlf") {
      nlf.emplace();
      models.push_back(&*nlf);
    } else {
      throw InputError("unknown baseline '" + name + "' (expected gaussian, nlf)");
    }
  }

  EvalReport report = evaluate(models, test, settings);
  report.provenance = provenance;

  std::printf("%-12s %12s %12s %12s\n", "model", "nll/dim", "kl_mean", "kl_std");
  for (const auto& m : report.models) {
    std::printf("%-12s %12.5f %12.5f %12.5f\n", m.name.c_str(), m.nll_per_dim, m.kl_mean, m.kl_std);
  }
  for (const auto& imp : report.improvements) {
    std::printf("%s vs %s: delta nll %.5f, likelihood improvement %.1f%%\n", imp.model.c_str(),
                imp.baseline.c_str(), imp.delta_nll, 100.0 * imp.likelihood_improvement);
  }
  if (!a.report.empty()) emit_report(report, a.report, ReportFormat::Json);
  if (!a.csv.empty()) emit_report(report, a.csv, ReportFormat::Csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string ckpt;
  std::string data;
  std::size_t clean = 0;
  int iso = 0;
  int camera = 0;
  std::string out;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  bool nearest_iso = false;
};

int run_sample(const SampleArgs& a) {
  const FlowModel model = load(a.ckpt);
  const PatchDataset source = read_dataset(a.data);
  if (a.clean >= source.size()) {
    throw InputError("--clean " + std::to_string(a.clean) + " is out of range (" +
                     std::to_string(source.size()) + " records)");
  }
  if (a.camera < 0 || a.camera >= model.config().camera_count) {
    throw InputError("--camera must be in [0, " + std::to_string(model.config().camera_count) + ")");
  }
  if (a.count == 0) throw InputError("--count must be positive");
  if (a.iso <= 0) throw InputError("--iso must be positive");
  const auto& isos = model.config().iso_set;
  int model_iso = a.iso;
  if (std::find(isos.begin(), isos.end(), a.iso) == isos.end()) {
    if (!a.nearest_iso) {
      throw InputError("ISO " + std::to_string(a.iso) +
                       " is not in the checkpoint ISO set (use --nearest-iso to map it)");
    }
    model_iso = nearest_iso(isos, a.iso);
  }

  const PatchRecord& base = source.records[a.clean];
  ConditioningContext ctx = base.context();
  ctx.iso = model_iso;
  ctx.camera_id = a.camera;

  PatchDataset out;
  out.shape = source.shape;
  out.iso_set = {a.iso};
  out.camera_count = model.config().camera_count;
  RngStream rng(a.seed, a.clean);
  for (std::size_t k = 0; k < a.count; ++k) {
    RngStream draw = rng.split(k);
    const Patch noise = model.sample(ctx, draw);
    PatchRecord rec;
    rec.camera_id = static_cast<std::uint8_t>(a.camera);
    rec.iso = static_cast<std::uint32_t>(a.iso);
    rec.clean_is_gain_amplified = base.clean_is_gain_amplified;
    rec.clean = base.clean;
    rec.noise = noise.cast<float>();
    out.records.push_back(std::move(rec));
  }
  write_dataset(out, a.out);
  std::cout << "wrote " << out.size() << " sampled noise records to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  std::string ckpt;
  std::string arch;
  std::uint64_t seed = 7;
};

int run_check(const CheckArgs& a) {
  CheckOptions opts;
  opts.seed = a.seed;
  std::optional<FlowModel> model;
  if (!a.ckpt.empty()) {
    model.emplace(load(a.ckpt));
    // Probe the stored parameters as they are.
    opts.perturb_scale = 0.0;
  } else {
    ModelConfig cfg;
    cfg.arch = ArchitectureSpec::parse(a.arch.empty() ? std::string(kDefaultArchitecture) : a.arch);
    RngStream rng(a.seed);
    model.emplace(FlowModel::build(cfg, rng));
  }
  const auto results = run_all_checks(*model, opts);
  std::cout << format_check_table(results);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << "\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------

struct CountArgs {
  std::string arch{kDefaultArchitecture};
  std::size_t hidden_width = 32;
  std::string isos = "100,400,800,1600";
  int cameras = 5;
};

int run_count(const CountArgs& a) {
  ModelConfig cfg;
  cfg.arch = ArchitectureSpec::parse(a.arch);
  cfg.hidden_width = a.hidden_width;
  cfg.iso_set.clear();
  for (const auto& s : split_list(a.isos)) {
    try {
      cfg.iso_set.push_back(std::stoi(s));
    } catch (const std::exception&) {
      throw InputError("invalid ISO level '" + s + "'");
    }
  }
  if (cfg.camera_count = a.cameras; cfg.camera_count <= 0) throw InputError("--cameras must be positive");
  RngStream rng(0);
  const FlowModel model = FlowModel::build(cfg, rng);
  for (const auto& row : model.param_breakdown()) {
    std::printf("%-20s %-16s %6zu\n", row.layer.c_str(), to_string(row.kind).c_str(), row.count);
  }
  const std::size_t total = model.param_count();
  std::printf("total %zu\n", total);
  if (total < kParameterBudget) {
    std::printf("< %zu: OK\n", kParameterBudget);
  } else {
    std::printf(">= %zu: over budget\n", kParameterBudget);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional normalizing-flow noise model for raw sensor images"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic heteroscedastic dataset");
  gen_cmd->add_option("--spec", gen.spec, "Synthetic spec JSON")->required();
  gen_cmd->add_option("--out", gen.out, "Output NFPATCH1 file (train part when splitting)")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");
  gen_cmd->add_option("--train-fraction", gen.train_fraction,
                      "Stratified split fraction; requires --test-out");
  gen_cmd->add_option("--test-out", gen.test_out, "Output file for the held-out part");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a flow by maximum likelihood");
  train_cmd->add_option("--config", tr.config, "Run config JSON");
  train_cmd->add_option("--data", tr.data, "Training NFPATCH1 file");
  train_cmd->add_option("--test", tr.test, "Test NFPATCH1 file for periodic NLL");
  train_cmd->add_option("--out", tr.out, "Checkpoint path");
  train_cmd->add_option("--trace", tr.trace, "Training trace CSV (default <out>.trace.csv)");
  train_cmd->add_option("--arch", tr.arch, "Architecture string");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--lr-decay", tr.lr_decay, "Per-epoch learning-rate multiplier");
  train_cmd->add_option("--step-lr-scale", tr.step_lr_scale,
                        "Learning-rate multiplier for coupling and channel-mix parameters");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_flag("--quiet", tr.quiet);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against baselines");
  eval_cmd->add_option("--ckpt", ev.ckpt)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--baselines", ev.baselines, "Comma-separated: gaussian,nlf (may be empty)");
  eval_cmd->add_option("--report", ev.report, "JSON report path");
  eval_cmd->add_option("--csv", ev.csv, "Per-record CSV path");
  eval_cmd->add_flag("--nearest-iso", ev.nearest_iso, "Map unknown ISO levels to the nearest one");
  eval_cmd->add_option("--samples-per-record", ev.samples_per_record);
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--bins", ev.bins, "Histogram bins");
  eval_cmd->add_option("--range", ev.range, "Histogram half-range");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Draw noise for a clean patch");
  sample_cmd->add_option("--ckpt", sa.ckpt)->required();
  sample_cmd->add_option("--data", sa.data, "NFPATCH1 file holding the clean patch")->required();
  sample_cmd->add_option("--clean", sa.clean, "Record index of the clean patch")->required();
  sample_cmd->add_option("--iso", sa.iso)->required();
  sample_cmd->add_option("--camera", sa.camera)->required();
  sample_cmd->add_option("--out", sa.out)->required();
  sample_cmd->add_option("--count", sa.count, "Number of samples");
  sample_cmd->add_option("--seed", sa.seed);
  sample_cmd->add_flag("--nearest-iso", sa.nearest_iso);

  CheckArgs ch;
  auto* check_cmd = app.add_subcommand("check", "Run invertibility, log-det and gradient oracles");
  auto* ck_opt = check_cmd->add_option("--ckpt", ch.ckpt);
  check_cmd->add_option("--arch", ch.arch)->excludes(ck_opt);
  check_cmd->add_option("--seed", ch.seed);

  CountArgs co;
  auto* count_cmd = app.add_subcommand("count-params", "Print the parameter count of an architecture");
  count_cmd->add_option("--arch", co.arch);
  count_cmd->add_option("--hidden-width", co.hidden_width);
  count_cmd->add_option("--isos", co.isos, "Comma-separated ISO levels");
  count_cmd->add_option("--cameras", co.cameras);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) {
      if (gen.test_out.empty() != (gen.train_fraction == 0.0)) {
        throw InputError("--train-fraction and --test-out must be given together");
      }
      return run_gen_data(gen);
    }
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*sample_cmd) return run_sample(sa);
    if (*check_cmd) return run_check(ch);
    if (*count_cmd) return run_count(co);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
