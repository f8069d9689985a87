#include "gridtrip/scenarios.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace gridtrip;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict trace_dict(const SimulationTrace& tr) {
    py::dict d;
    d["name"] = tr.scenario.name;
    d["side"] = to_string(tr.scenario.side);
    d["scenario"] = to_py(to_json(tr.scenario));
    d["inverter_count"] = tr.inverter_count;
    d["t"] = tr.t;
    d["v_ss_filt"] = tr.v_ss_filt;
    d["frac_2005"] = tr.frac[0];
    d["frac_2015"] = tr.frac[1];
    d["frac_2020"] = tr.frac[2];
    d["frac_weighted"] = tr.frac_weighted;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Co-simulation and aggregate DER tripping models";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::enum_<Side>(m, "Side").value("under", Side::under).value("over", Side::over);
    py::enum_<DerCode>(m, "DerCode")
        .value("inv2005", DerCode::inv2005)
        .value("inv2015", DerCode::inv2015)
        .value("inv2020", DerCode::inv2020);
    py::enum_<Family>(m, "Family").value("pi", Family::pi).value("dera", Family::dera);

    py::class_<PiParams>(m, "PiParams")
        .def(py::init<>())
        .def_readwrite("side", &PiParams::side)
        .def_readwrite("v0_prop", &PiParams::v0_prop)
        .def_readwrite("v1_prop", &PiParams::v1_prop)
        .def_readwrite("v0_int", &PiParams::v0_int)
        .def_readwrite("v1_int", &PiParams::v1_int)
        .def_readwrite("t_deact", &PiParams::t_deact)
        .def_readwrite("v0_rec", &PiParams::v0_rec)
        .def_readwrite("t_rec", &PiParams::t_rec)
        .def_readwrite("trv", &PiParams::trv)
        .def_readwrite("reactivation", &PiParams::reactivation)
        .def("feasible", &PiParams::feasible)
        .def("to_dict", [](const PiParams& p) { return to_py(to_json(p)); })
        .def_static("from_dict", [](const py::object& o) { return pi_from_json(from_py(o)); });

    py::class_<DerAParams>(m, "DerAParams")
        .def(py::init<>())
        .def_readwrite("v_l0", &DerAParams::v_l0)
        .def_readwrite("v_l1", &DerAParams::v_l1)
        .def_readwrite("v_h1", &DerAParams::v_h1)
        .def_readwrite("v_h0", &DerAParams::v_h0)
        .def_readwrite("t_vl0", &DerAParams::t_vl0)
        .def_readwrite("t_vl1", &DerAParams::t_vl1)
        .def_readwrite("t_vh0", &DerAParams::t_vh0)
        .def_readwrite("t_vh1", &DerAParams::t_vh1)
        .def_readwrite("v_r_frac", &DerAParams::v_r_frac)
        .def_readwrite("trv", &DerAParams::trv)
        .def("to_dict", [](const DerAParams& p) { return to_py(to_json(p)); });

    m.def(
        "pi_simulate",
        [](const PiParams& p, const std::vector<double>& v, double dt) { return pi_simulate(p, PiState{}, v, dt); },
        py::arg("params"), py::arg("v_ss"), py::arg("dt"), "Active fraction of one PI block from a fresh state.");
    m.def(
        "dera_simulate",
        [](const DerAParams& p, const std::vector<double>& v, double dt) { return dera_simulate(p, DerAState{}, v, dt); },
        py::arg("params"), py::arg("v_ss"), py::arg("dt"));
    m.def(
        "default_model_predict",
        [](const std::string& name, const std::vector<double>& v, double dt) {
            const auto d = make_default_models();
            if (name != "DER_A" && name != "DERAEMO1") throw ConfigError("unknown default model '" + name + "'");
            return composite_predict(name == "DER_A" ? d.der_a : d.deraemo1, v, dt).weighted;
        },
        py::arg("name"), py::arg("v_ss"), py::arg("dt"));
    m.def(
        "mae", [](const std::vector<double>& a, const std::vector<double>& b) { return mae(a, b); },
        py::arg("predicted"), py::arg("actual"));

    m.def(
        "pso_minimize",
        [](const std::function<double(std::vector<double>)>& f, const std::vector<double>& lower,
           const std::vector<double>& upper, std::size_t swarm_size, int max_iters, std::uint64_t seed) {
            SwarmConfig cfg;
            cfg.swarm_size = swarm_size;
            cfg.max_iters = max_iters;
            cfg.seed = seed;
            const Objective objective = [&f](std::span<const double> x) {
                py::gil_scoped_acquire gil;
                return f(std::vector<double>(x.begin(), x.end()));
            };
            FitResult r;
            {
                py::gil_scoped_release release;
                r = pso_minimize(objective, Bounds{lower, upper}, cfg);
            }
            return to_py(to_json(r));
        },
        py::arg("objective"), py::arg("lower"), py::arg("upper"), py::arg("swarm_size") = 100,
        py::arg("max_iters") = 100, py::arg("seed") = 1);

    m.def(
        "simulate_scenario",
        [](const py::object& scenario, int n_dg, std::uint64_t seed) {
            const auto spec = scenario_from_json(from_py(scenario));
            SimulationTrace tr;
            {
                py::gil_scoped_release release;
                const auto sys = load_cosim_system(n_dg, seed, default_fixtures_dir());
                tr = run_cosimulation(sys, spec);
            }
            return trace_dict(tr);
        },
        py::arg("scenario"), py::arg("n_dg") = 2, py::arg("seed") = 7);
    m.def(
        "generate_suite",
        [](const std::string& kind) {
            py::list out;
            for (const auto& s : generate_suite(parse_suite(kind))) out.append(to_py(to_json(s)));
            return out;
        },
        py::arg("kind"));
    m.def(
        "read_traces",
        [](const std::filesystem::path& dir) {
            py::list out;
            for (const auto& tr : read_traces(dir).traces) out.append(trace_dict(tr));
            return out;
        },
        py::arg("directory"));
    m.def("fixtures_dir", &default_fixtures_dir);
}
