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

// Python bindings. Patches cross the boundary as float64 (H, W, C) arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <string>
#include <vector>

#include "noiseflow/baselines.hpp"
#include "noiseflow/checks.hpp"
#include "noiseflow/data.hpp"
#include "noiseflow/evaluation.hpp"
#include "noiseflow/model.hpp"
#include "noiseflow/training.hpp"

namespace py = pybind11;
using namespace nflow;

namespace {

using InArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Patch to_patch(const InArray& array, const char* what) {
  if (array.ndim() != 3) {
    throw InputError(std::string(what) + " must be a 3-d (H, W, C) array");
  }
  const Shape shape{static_cast<std::size_t>(array.shape(0)), static_cast<std::size_t>(array.shape(1)),
                    static_cast<std::size_t>(array.shape(2))};
  return Patch(shape, std::vector<double>(array.data(), array.data() + array.size()));
}

template <typename T>
py::array_t<T> to_array(const BasicPatch<T>& patch) {
  const Shape& s = patch.shape();
  py::array_t<T> out({s.height, s.width, s.channels});
  std::copy(patch.data().begin(), patch.data().end(), out.mutable_data());
  return out;
}

ConditioningContext make_context(const InArray& clean, int iso, int camera, bool gain_amplified) {
  ConditioningContext ctx;
  ctx.clean = to_patch(clean, "clean");
  ctx.iso = iso;
  ctx.camera_id = camera;
  ctx.clean_is_gain_amplified = gain_amplified;
  return ctx;
}

ModelConfig make_config(const std::string& arch, const std::vector<int>& iso_set, int cameras,
                        std::size_t hidden_width) {
  ModelConfig config;
  config.arch = ArchitectureSpec::parse(arch);
  config.iso_set = iso_set;
  config.camera_count = cameras;
  config.hidden_width = hidden_width;
  return config;
}

py::dict trace_row_dict(const TraceRow& row) {
  py::dict d;
  d["step"] = row.step;
  d["train_nll"] = row.train_nll;
  d["test_nll"] = row.test_nll;
  d["b1"] = row.b1;
  d["b2"] = row.b2;
  d["v"] = row.v;
  d["w"] = row.w;
  return d;
}

py::dict record_dict(const PatchRecord& r) {
  py::dict d;
  d["camera"] = static_cast<int>(r.camera_id);
  d["iso"] = r.iso;
  d["nlf_beta1"] = r.nlf_beta1;
  d["nlf_beta2"] = r.nlf_beta2;
  d["clean_is_gain_amplified"] = r.clean_is_gain_amplified;
  d["clean"] = to_array(r.clean);
  d["noise"] = to_array(r.noise);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional normalizing-flow camera noise model";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", error.ptr());

  m.attr("DEFAULT_ARCHITECTURE") = std::string(kDefaultArchitecture);
  m.attr("PARAMETER_BUDGET") = kParameterBudget;

  m.def("likelihood_improvement", &likelihood_improvement, py::arg("nll_baseline"),
        py::arg("nll_model"));

  m.def(
      "marginal_kl",
      [](const InArray& real, const InArray& sampled, double range, std::size_t bins, double epsilon) {
        const NoiseHistogram p = histogram({real.data(), static_cast<std::size_t>(real.size())}, range, bins);
        const NoiseHistogram q =
            histogram({sampled.data(), static_cast<std::size_t>(sampled.size())}, range, bins);
        return kl_divergence(p, q, epsilon);
      },
      py::arg("real"), py::arg("sampled"), py::arg("range") = 0.2, py::arg("bins") = 256,
      py::arg("epsilon") = 1e-12, "KL(real || sampled) between value histograms on [-range, range].");

  m.def(
      "nlf_nll",
      [](const InArray& noise, const InArray& clean, double beta1, double beta2) {
        return nlf_nll(NlfModel{beta1, beta2}, to_patch(noise, "noise"), to_patch(clean, "clean"));
      },
      py::arg("noise"), py::arg("clean"), py::arg("beta1"), py::arg("beta2"));

  // -------------------------------------------------------------------------

  py::class_<PatchDataset>(m, "Dataset")
      .def_static("read", &read_dataset, py::arg("path"))
      .def("write", [](const PatchDataset& d, const std::filesystem::path& p) { write_dataset(d, p); },
           py::arg("path"))
      .def("__len__", &PatchDataset::size)
      .def_property_readonly("shape", [](const PatchDataset& d) {
        return py::make_tuple(d.shape.height, d.shape.width, d.shape.channels);
      })
      .def_readonly("iso_set", &PatchDataset::iso_set)
      .def_readonly("camera_count", &PatchDataset::camera_count)
      .def("record", [](const PatchDataset& d, std::size_t i) {
        if (i >= d.size()) throw py::index_error("record index out of range");
        return record_dict(d.records[i]);
      }, py::arg("index"))
      .def("split", [](const PatchDataset& d, double fraction, std::uint64_t seed) {
        DatasetSplit s = split(d, fraction, seed);
        return py::make_tuple(std::move(s.train), std::move(s.test));
      }, py::arg("train_fraction"), py::arg("seed") = 0);

  m.def(
      "generate_synthetic",
      [](double beta1, double beta2, std::vector<double> camera_gains, std::vector<int> iso_set,
         std::size_t patches_per_cell, std::tuple<std::size_t, std::size_t, std::size_t> shape,
         double iso_gain_scale, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.beta1 = beta1;
        spec.beta2 = beta2;
        spec.camera_gains = std::move(camera_gains);
        spec.iso_set = std::move(iso_set);
        spec.patches_per_cell = patches_per_cell;
        spec.shape = Shape{std::get<0>(shape), std::get<1>(shape), std::get<2>(shape)};
        spec.iso_gain_scale = iso_gain_scale;
        spec.seed = seed;
        return generate_synthetic(spec);
      },
      py::arg("beta1") = 0.02, py::arg("beta2") = 1e-4,
      py::arg("camera_gains") = std::vector<double>{0.8, 1.0, 1.25},
      py::arg("iso_set") = std::vector<int>{100, 400, 800, 1600}, py::arg("patches_per_cell") = 10,
      py::arg("shape") = std::make_tuple(32, 32, 4), py::arg("iso_gain_scale") = 1.0 / 1600.0,
      py::arg("seed") = 0);

  // -------------------------------------------------------------------------

  py::class_<FlowModel>(m, "FlowModel")
      .def(py::init([](const std::string& arch, std::vector<int> iso_set, int cameras,
                       std::size_t hidden_width, std::uint64_t seed) {
             RngStream rng(seed, 0x494E4954);
             return FlowModel::build(make_config(arch, iso_set, cameras, hidden_width), rng);
           }),
           py::arg("arch") = std::string(kDefaultArchitecture),
           py::arg("iso_set") = std::vector<int>{100, 400, 800, 1600}, py::arg("cameras") = 5,
           py::arg("hidden_width") = 32, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load(p); }, py::arg("path"))
      .def("save", [](const FlowModel& model, const std::filesystem::path& p) { save(model, p); },
           py::arg("path"))
      .def_property_readonly("arch", [](const FlowModel& model) { return model.config().arch.render(); })
      .def_property_readonly("iso_set", [](const FlowModel& model) { return model.config().iso_set; })
      .def_property_readonly("camera_count",
                             [](const FlowModel& model) { return model.config().camera_count; })
      .def_property_readonly("param_count", &FlowModel::param_count)
      .def("param_breakdown", [](const FlowModel& model) {
        py::list out;
        for (const LayerParamCount& row : model.param_breakdown()) {
          out.append(py::make_tuple(row.layer, to_string(row.kind), row.count));
        }
        return out;
      })
      .def("parameters", [](const FlowModel& model) {
        py::dict out;
        for (const ParamEntry& e : model.params().entries()) {
          out[py::str(e.name)] = py::array_t<double>(e.value.size(), e.value.data());
        }
        return out;
      })
      .def("set_parameter", [](FlowModel& model, const std::string& name, const InArray& values) {
        ParamEntry& e = model.params().at(name);
        if (static_cast<std::size_t>(values.size()) != e.value.size()) {
          throw InputError("parameter '" + name + "' holds " + std::to_string(e.value.size()) +
                           " values");
        }
        std::copy(values.data(), values.data() + values.size(), e.value.begin());
      }, py::arg("name"), py::arg("values"))
      .def("nll", [](const FlowModel& model, const InArray& noise, const InArray& clean, int iso,
                     int camera, bool gain_amplified) {
        const NllResult r = model.nll(to_patch(noise, "noise"), make_context(clean, iso, camera, gain_amplified));
        return py::make_tuple(r.total, r.per_dim);
      }, py::arg("noise"), py::arg("clean"), py::arg("iso"), py::arg("camera") = 0,
         py::arg("clean_is_gain_amplified") = false, "Returns (total, per_dim) in nats.")
      .def("inverse", [](const FlowModel& model, const InArray& noise, const InArray& clean, int iso,
                         int camera, bool gain_amplified) {
        double logdet = 0.0;
        const Patch z = model.inverse(to_patch(noise, "noise"), make_context(clean, iso, camera, gain_amplified), &logdet);
        return py::make_tuple(to_array(z), logdet);
      }, py::arg("noise"), py::arg("clean"), py::arg("iso"), py::arg("camera") = 0,
         py::arg("clean_is_gain_amplified") = false)
      .def("forward", [](const FlowModel& model, const InArray& base, const InArray& clean, int iso,
                         int camera, bool gain_amplified) {
        double logdet = 0.0;
        const Patch n = model.forward(to_patch(base, "base"), make_context(clean, iso, camera, gain_amplified), &logdet);
        return py::make_tuple(to_array(n), logdet);
      }, py::arg("base"), py::arg("clean"), py::arg("iso"), py::arg("camera") = 0,
         py::arg("clean_is_gain_amplified") = false)
      .def("sample", [](const FlowModel& model, const InArray& clean, int iso, int camera,
                        std::uint64_t seed, bool gain_amplified) {
        RngStream rng(seed);
        return to_array(model.sample(make_context(clean, iso, camera, gain_amplified), rng));
      }, py::arg("clean"), py::arg("iso"), py::arg("camera") = 0, py::arg("seed") = 0,
         py::arg("clean_is_gain_amplified") = false)
      .def("dataset_nll", &dataset_nll, py::arg("dataset"))
      .def("train", [](FlowModel& model, const PatchDataset& train_set, const PatchDataset* test_set,
                       std::size_t epochs, std::size_t batch_size, double lr, double lr_decay,
                       double step_lr_scale, std::uint64_t seed) {
        TrainConfig config;
        config.epochs = epochs;
        config.batch_size = batch_size;
        config.adam.lr = lr;
        config.lr_decay = lr_decay;
        config.flow_step_lr_scale = step_lr_scale;
        config.seed = seed;
        TrainingTrace trace;
        {
          py::gil_scoped_release release;
          trace = nflow::train(model, train_set, test_set, config);
        }
        py::list rows;
        for (const TraceRow& row : trace.rows) rows.append(trace_row_dict(row));
        return rows;
      }, py::arg("train"), py::arg("test") = nullptr, py::arg("epochs") = 10,
         py::arg("batch_size") = 16, py::arg("lr") = 1e-3, py::arg("lr_decay") = 1.0,
         py::arg("step_lr_scale") = 1.0, py::arg("seed") = 0, "Minibatch Adam on the mean per-dimension NLL; returns the trace rows.")
      .def("check", [](const FlowModel& model, std::uint64_t seed, double perturb_scale) {
        CheckOptions options;
        options.seed = seed;
        options.perturb_scale = perturb_scale;
        py::list out;
        for (const CheckResult& r : run_all_checks(model, options)) {
          py::dict d;
          d["suite"] = r.suite;
          d["target"] = r.target;
          d["passed"] = r.passed;
          d["value"] = r.value;
          d["tolerance"] = r.tolerance;
          d["detail"] = r.detail;
          out.append(d);
        }
        return out;
      }, py::arg("seed") = 7, py::arg("perturb_scale") = 0.1);
}
