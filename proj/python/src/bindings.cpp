#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fkstab/assumptions.hpp"
#include "fkstab/error.hpp"
#include "fkstab/experiment.hpp"
#include "fkstab/finite_oracle.hpp"
#include "fkstab/kalman.hpp"
#include "fkstab/particle_filter.hpp"

namespace py = pybind11;
using namespace fkstab;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feynman-Kac oracles, particle filters and stability checks";
  m.attr("__version__") = FKSTAB_VERSION;

  static py::exception<Error> base(m, "FkstabError");
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      PyErr_SetString(validation.ptr(), e.what());
    } catch (const NumericalError& e) {
      PyErr_SetString(numerical.ptr(), e.what());
    } catch (const IoError& e) {
      PyErr_SetString(io.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  py::class_<FiniteModel>(m, "FiniteModel")
      .def_property_readonly("size", &FiniteModel::size)
      .def_property_readonly("initial", &FiniteModel::initial)
      .def("transition", &FiniteModel::transition, py::arg("n"))
      .def("potential", &FiniteModel::potential, py::arg("n"))
      .def("to_json", [](const FiniteModel& fm) { return to_json(fm).dump(); });

  m.def("finite_model",
        [](std::vector<Matrix> transitions, std::vector<Vector> potentials, Vector initial,
           std::optional<Vector> lyapunov) {
          return build_finite_model(std::move(transitions), std::move(potentials), std::move(initial),
                                    std::move(lyapunov));
        },
        py::arg("transitions"), py::arg("potentials"), py::arg("initial"), py::arg("lyapunov") = py::none());
  m.def("two_state_model", &two_state_model, py::arg("g0") = 2.0, py::arg("g1") = 1.0);

  py::class_<FKTrajectory>(m, "FKTrajectory")
      .def_readonly("etas", &FKTrajectory::etas)
      .def_readonly("lambdas", &FKTrajectory::lambdas)
      .def_readonly("log_gamma", &FKTrajectory::log_gamma);
  m.def("exact_filter", py::overload_cast<const FiniteModel&, std::size_t>(&exact_filter), py::arg("model"),
        py::arg("n"));
  m.def("h_functions", [](const FiniteModel& fm, std::size_t n) { return h_functions(fm, exact_filter(fm, n), n).h; },
        py::arg("model"), py::arg("n"));
  m.def("asymptotic_variance",
        [](const FiniteModel& fm, const Vector& phi, std::size_t n) {
          return asymptotic_variance(fm, exact_filter(fm, n), phi, n);
        },
        py::arg("model"), py::arg("phi"), py::arg("n"));
  m.def("relvar_expansion", [](const FiniteModel& fm, std::size_t particles, std::size_t n) {
    return relvar_expansion(fm, particles, n).total;
  }, py::arg("model"), py::arg("particles"), py::arg("n"));

  m.def("run_filter",
        [](const FiniteModel& fm, std::size_t particles, std::size_t n, std::uint64_t seed,
           std::optional<Vector> phi) {
          std::vector<TestFunction> phis;
          if (phi) phis.push_back(finite_test_function(*phi));
          const auto t = run_filter(FiniteSubstrate(fm), particles, n, RandomStream(seed, 0), phis);
          py::dict out;
          out["log_z"] = t.log_z;
          out["estimates"] = t.estimates;
          return out;
        },
        py::arg("model"), py::arg("particles"), py::arg("n"), py::arg("seed"), py::arg("phi") = py::none());

  m.def("kalman_log_z",
        [](double a, double q, double r, double m0, double p0, std::vector<double> y) {
          return kalman_filter(LinearGaussianParams{a, q, r, m0, p0}, y).log_z;
        },
        py::arg("a"), py::arg("q"), py::arg("r"), py::arg("m0"), py::arg("p0"), py::arg("y"));

  m.def("check_finite_drift_json",
        [](const FiniteModel& fm, std::optional<double> delta, std::vector<double> levels) {
          return to_json(check_finite_drift(fm, delta, levels)).dump();
        },
        py::arg("model"), py::arg("delta"), py::arg("levels"));

  m.def("execute_config_json",
        [](const std::string& config, std::size_t workers) {
          const auto spec = spec_from_json(json::parse(config));
          const auto result = execute(spec, workers);
          return py::make_tuple(result.summary.dump(), result.table.to_string());
        },
        py::arg("config"), py::arg("workers") = 1);
  m.def("resolve_config_json",
        [](const std::string& config) { return spec_to_json(spec_from_json(json::parse(config))).dump(); },
        py::arg("config"));
}
