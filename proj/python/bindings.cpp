/**
 * Copyright (c) edgesplit contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edgesplit/encoder.hpp"
#include "edgesplit/error.hpp"
#include "edgesplit/experiment.hpp"
#include "edgesplit/gmm.hpp"
#include "edgesplit/manifold.hpp"
#include "edgesplit/system_sim.hpp"

namespace py = pybind11;
using namespace edgesplit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ConfigurationError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return DenseMatrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const DenseMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw ConfigurationError("expected a 1-D array");
  return Vector(a.data(), a.data() + a.shape(0));
}

Array to_array(const Vector& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["seed"] = s.seed;
  d["policy"] = s.policy;
  d["network"] = s.network;
  d["frames"] = s.frames;
  d["mean_latency_ms"] = s.mean_latency_ms;
  d["p95_latency_ms"] = s.p95_latency_ms;
  d["mean_energy_mj"] = s.mean_energy_mj;
  d["mean_reward"] = s.mean_reward;
  d["mean_k"] = s.mean_k;
  d["drop_fraction"] = s.drop_fraction;
  d["total_tx_bytes"] = s.total_tx_bytes;
  d["tx_bytes_per_batch"] = s.tx_bytes_per_batch;
  d["battery_hours"] = s.battery_hours;
  d["adaptation_ms"] = s.adaptation_ms ? py::cast(*s.adaptation_ms) : py::none();
  d["final_probe_accuracy"] = s.final_probe_accuracy;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Split-computing simulator core";

  // Translators are tried newest first, so the base class goes in first.
  py::register_exception<Error>(m, "EdgesplitError", PyExc_RuntimeError);
  py::register_exception<ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);

  py::class_<EncoderState>(m, "Encoder")
      .def(py::init([](int num_blocks, int input_dim, int hidden_dim, int embed_dim, std::uint64_t seed) {
             Rng rng(seed);
             return make_encoder(EncoderConfig{num_blocks, input_dim, hidden_dim, embed_dim}, rng);
           }),
           py::arg("num_blocks") = 8, py::arg("input_dim") = 128, py::arg("hidden_dim") = 128,
           py::arg("embed_dim") = 128, py::arg("seed") = 0)
      .def_property_readonly("num_blocks", [](const EncoderState& e) { return e.config.num_blocks; })
      .def("width_at", [](const EncoderState& e, int k) { return e.config.width_at(k); })
      .def("prefix", [](const EncoderState& e, const Array& x, int k) { return to_array(encode_prefix(e, to_vector(x), k)); })
      .def("suffix", [](const EncoderState& e, const Array& h, int k) { return to_array(encode_suffix(e, to_vector(h), k)); })
      .def("full", [](const EncoderState& e, const Array& x) { return to_array(encode_full(e, to_vector(x))); });

  py::class_<QuantizationSpec>(m, "QuantizationSpec")
      .def_readonly("scale", &QuantizationSpec::scale)
      .def_readonly("zero_point", &QuantizationSpec::zero_point)
      .def_readonly("constant", &QuantizationSpec::constant);
  m.def("calibrate", [](const Array& v) { return calibrate(to_vector(v)); });
  m.def("quantize_dequantize",
        [](const Array& v, const QuantizationSpec& spec) { return to_array(quantize_dequantize(to_vector(v), spec)); });

  m.def("payload_bytes",
        [](int k, bool quantized) { return payload_bytes(k, quantized, EncoderConfig{}); },
        py::arg("k"), py::arg("quantized") = false);
  m.def("frame_energy_mj",
        [](int k, bool quantized, const std::string& platform, double bandwidth_mbps, double rtt_ms) {
          const TracePoint link{0, bandwidth_mbps, rtt_ms, 0.0};
          return frame_cost(k, platform_by_name(platform), link, quantized, EncoderConfig{}).energy_mj;
        },
        py::arg("k"), py::arg("quantized") = false, py::arg("platform") = "pi4",
        py::arg("bandwidth_mbps") = 25.0, py::arg("rtt_ms") = 40.0);
  m.def("battery_life_hours", [](double mj) { return battery_life_hours(mj); });
  m.def("trace_csv", [](const std::string& kind, std::uint64_t seed, std::int64_t duration_ms) {
    return trace_to_csv(make_profile(parse_trace_kind(kind), seed, duration_ms));
  }, py::arg("kind"), py::arg("seed"), py::arg("duration_ms") = 60000);

  py::class_<GmmState>(m, "Gmm")
      .def(py::init([](int components, int dim) {
             GmmConfig cfg;
             cfg.num_components = components;
             cfg.dim = dim;
             return make_gmm(cfg);
           }),
           py::arg("components"), py::arg("dim"))
      .def("update", [](GmmState& g, const Array& z) { em_update(g, to_vector(z)); })
      .def("posterior", [](const GmmState& g, const Array& z) { return to_array(posterior(g, to_vector(z))); })
      .def("uncertainty", [](const GmmState& g, const Array& z) { return uncertainty(g, to_vector(z)); })
      .def("selection_probabilities",
           [](const GmmState& g, int anchor, double hardness) {
             return to_array(boundary_selection_probabilities(g, anchor, hardness));
           })
      .def_property_readonly("initialized", [](const GmmState& g) { return g.initialized; })
      .def_property_readonly("weights", [](const GmmState& g) { return to_array(g.weights); })
      .def_property_readonly("means", [](const GmmState& g) { return to_array(g.means); });

  m.def("sliced_wasserstein", [](const Array& a, const Array& b, int projections, std::uint64_t seed) {
    const DenseMatrix ma = to_matrix(a);
    return sliced_wasserstein(ma, to_matrix(b), make_projections(projections, static_cast<int>(ma.cols()), seed));
  }, py::arg("a"), py::arg("b"), py::arg("projections") = 50, py::arg("seed") = 17);
  m.def("effective_rank", [](const Array& z) { return effective_rank(to_matrix(z)); });
  m.def("dirichlet_energy",
        [](const std::vector<std::int64_t>& timestamps, const Array& z, int k, std::int64_t window_ms) {
          return dirichlet_energy(build_knn_temporal_graph(timestamps, k, window_ms), to_matrix(z));
        },
        py::arg("timestamps_ms"), py::arg("embeddings"), py::arg("k") = 5, py::arg("window_ms") = 1'000'000);
  m.def("spectral_gap", [](const std::vector<std::int64_t>& timestamps, int k, std::int64_t window_ms) {
    return spectral_gap(build_knn_temporal_graph(timestamps, k, window_ms));
  }, py::arg("timestamps_ms"), py::arg("k") = 5, py::arg("window_ms") = 1'000'000);

  m.def("validate_config", [](const std::string& text) { parse_config(text).validate(); });
  m.def("run", [](const std::string& config_text, std::uint64_t seed) {
    ExperimentConfig cfg = parse_config(config_text);
    cfg.seed = seed;
    RunResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(cfg);
    }
    return py::make_tuple(metrics_csv(r.rows), summary_dict(r.summary));
  }, py::arg("config_text"), py::arg("seed"),
        "Runs one experiment; returns (metrics CSV text, summary dict).");
}
