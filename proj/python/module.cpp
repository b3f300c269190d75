#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "driftforge/checkpoint.hpp"
#include "driftforge/dataset_io.hpp"
#include "driftforge/errors.hpp"
#include "driftforge/evaluation.hpp"
#include "driftforge/quantizer.hpp"

namespace py = pybind11;
using namespace driftforge;

namespace {

// Thin handle over a loaded checkpoint so Python callers can draw from the
// trained model without touching the training machinery.
struct Model {
  Checkpoint ck;

  static Model load(const std::string& path) { return Model{load_checkpoint(path)}; }

  std::vector<double> sample(double r_init, double d, int n,
                             std::uint64_t seed) const {
    if (n < 1) throw ValidationError("sample: n must be >= 1");
    Sampler s = make_gan_sampler(ck.nets.g, ck.stats.stats);
    Rng rng = make_rng(seed, streams::eval, 0, 0);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = s(r_init, d, rng);
    return out;
  }

  std::vector<double> sequence(double r_init, double d, int steps,
                               std::uint64_t seed) const {
    Rng rng = make_rng(seed, streams::eval, 1, 0);
    return generate_sequence(ck.nets.g, r_init, d, steps, ck.stats.stats, rng)
        .values;
  }
};

}  // namespace

PYBIND11_MODULE(_driftforge, m) {
  m.doc() = "metastable-switch drift simulator and generative drift model";

  py::register_exception<ValidationError>(m, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  py::class_<DeviceParams>(m, "DeviceParams")
      .def(py::init<>())
      .def_readwrite("n_switches", &DeviceParams::n_switches)
      .def_readwrite("n_thresh", &DeviceParams::n_thresh)
      .def_readwrite("v_barrier", &DeviceParams::v_barrier)
      .def_readwrite("g_parallel", &DeviceParams::g_parallel)
      .def_readwrite("g_step", &DeviceParams::g_step)
      .def_readwrite("v_offset", &DeviceParams::v_offset)
      .def_readwrite("temperature", &DeviceParams::temperature)
      .def_readwrite("k_boltzmann", &DeviceParams::k_boltzmann)
      .def_readwrite("q_electron", &DeviceParams::q_electron)
      .def_readwrite("attempt_rate", &DeviceParams::attempt_rate)
      .def("thermal_voltage", &DeviceParams::thermal_voltage);

  py::class_<NormStats>(m, "NormStats")
      .def(py::init<>())
      .def_readwrite("mu_r", &NormStats::mu_r)
      .def_readwrite("sigma_r", &NormStats::sigma_r)
      .def_readwrite("mu_diff", &NormStats::mu_diff)
      .def_readwrite("sigma_diff", &NormStats::sigma_diff);

  m.def("resistance_from_state", &resistance_from_state, py::arg("n"),
        py::arg("params") = DeviceParams{});
  m.def("state_from_resistance", &state_from_resistance, py::arg("r"),
        py::arg("params") = DeviceParams{});
  m.def("equilibrium_state", &equilibrium_state,
        py::arg("params") = DeviceParams{});

  m.def(
      "simulate_series",
      [](double r_init, double t_tot, double t_sample,
         const std::string& method, const DeviceParams& params,
         std::uint64_t seed) {
        Rng rng = make_rng(seed, streams::dataset, 0, 0);
        return simulate_series(r_init, t_tot, t_sample,
                               step_method_from_string(method), params, rng)
            .values;
      },
      py::arg("r_init"), py::arg("t_tot"), py::arg("t_sample") = 1.0,
      py::arg("method") = "tau_leap", py::arg("params") = DeviceParams{},
      py::arg("seed") = 1);

  m.def(
      "oracle_sample",
      [](double r_init, double d, int n, const DeviceParams& params,
         std::uint64_t seed) {
        if (n < 1) throw ValidationError("oracle_sample: n must be >= 1");
        Sampler s = make_oracle_sampler(params);
        Rng rng = make_rng(seed, streams::eval, 0, 0);
        std::vector<double> out(static_cast<std::size_t>(n));
        for (auto& v : out) v = s(r_init, d, rng);
        return out;
      },
      py::arg("r_init"), py::arg("delay"), py::arg("n") = 1,
      py::arg("params") = DeviceParams{}, py::arg("seed") = 1);

  m.def(
      "compute_stats",
      [](const std::vector<std::vector<double>>& series, double t_sample) {
        DriftDataset ds;
        ds.t_sample = t_sample;
        for (const auto& vals : series) {
          DriftSeries s;
          s.values = vals;
          s.t_sample = t_sample;
          s.r_init = vals.empty() ? 0.0 : vals.front();
          ds.series.push_back(std::move(s));
          ds.t_tot = (vals.size() < 2 ? 0.0 : (vals.size() - 1) * t_sample);
        }
        return compute_stats(ds);
      },
      py::arg("series"), py::arg("t_sample") = 1.0);

  m.def("normalize_resistance", &normalize_resistance, py::arg("r"),
        py::arg("stats"));
  m.def("denormalize_resistance", &denormalize_resistance, py::arg("rbar"),
        py::arg("stats"));

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def("sample", &Model::sample, py::arg("r_init"), py::arg("delay"),
           py::arg("n") = 1, py::arg("seed") = 1)
      .def("sequence", &Model::sequence, py::arg("r_init"), py::arg("delay"),
           py::arg("steps"), py::arg("seed") = 1)
      .def_property_readonly(
          "stats", [](const Model& mo) { return mo.ck.stats.stats; })
      .def_property_readonly(
          "step_count", [](const Model& mo) { return mo.ck.step_count; });

  py::class_<QuantizationScheme>(m, "QuantizationScheme")
      .def(py::init<>())
      .def_readwrite("levels", &QuantizationScheme::levels)
      .def_readwrite("boundaries", &QuantizationScheme::boundaries)
      .def_readwrite("delay", &QuantizationScheme::delay);

  m.def("read_scheme", &read_scheme, py::arg("path"));
  m.def("decode", &decode, py::arg("r"), py::arg("scheme"), py::arg("stats"));
}
