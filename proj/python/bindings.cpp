// Python bindings: special functions, closed-form theory, single trials and
// config-driven sweeps.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "corrlink/analysis.hpp"
#include "corrlink/errors.hpp"
#include "corrlink/estimators.hpp"
#include "corrlink/harness.hpp"
#include "corrlink/statmath.hpp"

namespace py = pybind11;
using namespace corrlink;

namespace {

py::dict row_to_dict(const harness::SweepRow& r) {
  py::dict d;
  d["scheme"] = r.scheme;
  d["d"] = r.d;
  d["k"] = r.k;
  d["rho_spec"] = r.rho_spec;
  d["alpha"] = r.alpha;
  d["m"] = r.m;
  d["b0"] = r.b0;
  d["trials"] = r.trials;
  d["failures"] = r.failures;
  d["bias"] = r.bias;
  d["bias_se"] = r.bias_se;
  d["variance"] = r.variance;
  d["variance_se"] = r.variance_se;
  d["mse"] = r.mse;
  d["mse_se"] = r.mse_se;
  d["theory_exact"] = r.theory_exact;
  d["theory_asymptotic"] = r.theory_asymptotic;
  d["theory_bound"] = r.theory_bound;
  d["bits_expected_mean"] = r.bits_expected_mean;
  d["bits_realized_mean"] = r.bits_realized_mean;
  return d;
}

harness::ExperimentConfig config_from_text(const std::string& text) {
  return harness::make_config(harness::parse_config_text(text));
}

}  // namespace

PYBIND11_MODULE(_corrlink, m) {
  m.doc() = "Correlation estimation from remote samples under one-way communication constraints";

  py::register_exception<Error>(m, "CorrlinkError");
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("phi", &statmath::phi);
  m.def("Q", &statmath::Q);
  m.def("Q_inv", &statmath::Q_inv);
  m.def("inverse_mills", &statmath::inverse_mills);
  m.def("geometric_entropy", &statmath::geometric_entropy);
  m.def("geometric_entropy_inv", &statmath::geometric_entropy_inv);

  m.def("threshold_for_bits", &analysis::threshold_for_bits, py::arg("k"));
  m.def("exact_threshold_variance", &analysis::exact_threshold_variance, py::arg("rho"), py::arg("t"));
  m.def("exact_max_variance", &analysis::exact_max_variance, py::arg("rho"), py::arg("k"));
  m.def("fisher_threshold", &analysis::fisher_threshold, py::arg("rho"), py::arg("t"));
  m.def("zhang_berger_optimal", &analysis::zhang_berger_optimal, py::arg("rho"), py::arg("k"));
  m.def("zhang_berger_variance", &analysis::zhang_berger_variance, py::arg("rho"), py::arg("k"), py::arg("rate"));
  m.def("laplace_theory", &analysis::laplace_theory, py::arg("rho"), py::arg("k"));

  m.def(
      "estimate_threshold",
      [](double rho, double k, std::uint64_t seed) {
        const auto r = estimators::estimate_threshold(sources::JointModel(sources::GaussianScalar{rho}), k, seed);
        return py::make_tuple(r.estimate.at(0), r.bits_expected);
      },
      py::arg("rho"), py::arg("k"), py::arg("seed"),
      "One threshold trial on a Gaussian pair; returns (estimate, expected bits).");

  m.def(
      "theory",
      [](const std::string& scheme, double k, const std::vector<double>& rho) {
        harness::ConfigMap map;
        std::ostringstream ks;
        ks.precision(17);
        ks << k;
        map.values = {{"scheme", scheme}, {"grid.k", ks.str()}, {"grid.rho", harness::rho_spec(rho)},
                      {"trials", "100"}};
        const auto cfg = harness::make_config(map);
        return analysis::to_text(harness::build_theory(cfg, harness::expand_grid(cfg).at(0)));
      },
      py::arg("scheme"), py::arg("k"), py::arg("rho"), "Theory report as text.");

  m.def(
      "run_sweep",
      [](const std::string& config_text, std::size_t threads) {
        const auto cfg = config_from_text(config_text);
        std::vector<harness::SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = harness::run_sweep(cfg, threads);
        }
        py::list out;
        for (const auto& r : rows) out.append(row_to_dict(r));
        return out;
      },
      py::arg("config_text"), py::arg("threads") = 1, "Run a sweep described by config text; rows as dicts.");

  m.def(
      "sweep_csv",
      [](const std::string& config_text, std::size_t threads) {
        const auto cfg = config_from_text(config_text);
        std::ostringstream os;
        {
          py::gil_scoped_release release;
          harness::emit_csv(harness::run_sweep(cfg, threads), os);
        }
        return os.str();
      },
      py::arg("config_text"), py::arg("threads") = 1);
}
