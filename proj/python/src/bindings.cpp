#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "assign_surrogate/cli.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/evaluation.hpp"
#include "assign_surrogate/pipeline.hpp"

namespace py = pybind11;
using namespace surrogate;

namespace {

template <class M>
py::array_t<typename M::value_type> to_numpy(const M& m) {
    py::array_t<typename M::value_type> out({m.rows(), m.cols()});
    auto v = out.template mutable_unchecked<2>();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
    }
    return out;
}

template <class M>
M from_numpy(const py::array_t<typename M::value_type, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ValidationError("expected a 2-d array");
    M m(a.shape(0), a.shape(1));
    auto v = a.template unchecked<2>();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = v(r, c);
    }
    return m;
}

Assignment to_assignment(const std::vector<int>& ranks) { return Assignment{ranks}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Assignment-aware travel-time surrogate: simulator, dataset and model bindings";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
    py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

    m.def(
        "run_command",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_command(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run one CLI invocation; returns (exit_code, stdout, stderr).");

    m.def(
        "grid_points",
        [](std::size_t k, int g) {
            std::vector<std::vector<int>> out;
            for (const auto& p : grid_points(k, g)) out.push_back(p.numerators);
            return out;
        },
        py::arg("k"), py::arg("resolution"), "Simplex grid numerators, C(g+K-1, K-1) points.");

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init([](double step, double interval, double horizon) { return SimConfig{step, interval, horizon}; }),
             py::arg("sim_step") = 1.0, py::arg("interval") = 10.0, py::arg("horizon") = 600.0)
        .def_readwrite("sim_step", &SimConfig::sim_step)
        .def_readwrite("interval", &SimConfig::interval)
        .def_readwrite("horizon", &SimConfig::horizon)
        .def_property_readonly("intervals", &SimConfig::intervals);

    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("rows", &ScenarioConfig::rows)
        .def_readwrite("cols", &ScenarioConfig::cols)
        .def_readwrite("edge_length", &ScenarioConfig::edge_length)
        .def_readwrite("speed", &ScenarioConfig::speed)
        .def_readwrite("capacity", &ScenarioConfig::capacity)
        .def_readwrite("hex_size", &ScenarioConfig::hex_size)
        .def_readwrite("agents", &ScenarioConfig::agents)
        .def_readwrite("departure_window", &ScenarioConfig::departure_window)
        .def_readwrite("k", &ScenarioConfig::k)
        .def_readwrite("sim", &ScenarioConfig::sim);

    py::class_<Scenario>(m, "Scenario")
        .def_property_readonly("cells", [](const Scenario& s) { return s.cmap.cell_count; })
        .def_property_readonly("agents", [](const Scenario& s) { return s.demand.size(); })
        .def_property_readonly("adjacency", [](const Scenario& s) { return to_numpy(s.graph.adjacency); })
        .def_property_readonly("sim", [](const Scenario& s) { return s.sim; })
        .def(
            "path_counts", [](const Scenario& s) {
                std::vector<std::size_t> out;
                for (const auto& c : s.sets) out.push_back(c.paths.size());
                return out;
            },
            "Number of candidate paths per agent.")
        .def(
            "random_assignment", [](const Scenario& s, std::uint64_t seed) { return random_assignment(s.sets, seed).path_index; },
            py::arg("seed"))
        .def(
            "sample_assignment",
            [](const Scenario& s, const std::vector<int>& numerators, std::uint64_t seed) {
                int g = 0;
                for (int n : numerators) g += n;
                return sample_assignment(s.sets, SimplexPoint{numerators, g}, seed, ZeroMass::UniformOverValid)
                    .path_index;
            },
            py::arg("numerators"), py::arg("seed"))
        .def(
            "simulate",
            [](const Scenario& s, const std::vector<int>& ranks) {
                SimResult r;
                {
                    py::gil_scoped_release release;
                    r = simulate(s.net, s.demand, s.sets, to_assignment(ranks), s.cmap, s.sim);
                }
                py::dict out;
                out["flows"] = to_numpy(r.flows);
                out["total_travel_time"] = r.total_travel_time;
                out["unfinished"] = r.unfinished;
                return out;
            },
            py::arg("ranks"), "Simulate one assignment; returns flows (S x T), total_travel_time [s], unfinished.")
        .def(
            "assignment_matrix",
            [](const Scenario& s, const std::vector<int>& ranks) {
                return to_numpy(
                    assignment_matrix(s.demand, s.sets, to_assignment(ranks), s.cmap, s.sim.intervals(), s.sim.interval)
                        .counts);
            },
            py::arg("ranks"));

    m.def("build_scenario", &build_scenario, py::arg("config"), py::arg("seed"),
          "Grid network, cells, demand and choice sets for one configuration.");

    m.def(
        "aggregate_tt",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& q, double interval) {
            return aggregate_tt(from_numpy<RealMatrix>(q), interval);
        },
        py::arg("flows"), py::arg("interval"), "Total travel time [s] from an S x T flow matrix.");

    m.def("spearman", &spearman, py::arg("a"), py::arg("b"));

    py::class_<Model>(m, "Model")
        .def_static("load", &Model::load, py::arg("directory"))
        .def("save", &Model::save, py::arg("directory"))
        .def_property_readonly("cells", [](const Model& md) { return md.config().cells; })
        .def_property_readonly("interval", [](const Model& md) { return md.config().interval; })
        .def_property_readonly("uses_assignment", [](const Model& md) { return md.config().use_assignment; })
        .def(
            "rollout",
            [](const Model& md, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
                const auto assign = from_numpy<IntMatrix>(a);
                RealMatrix q;
                {
                    py::gil_scoped_release release;
                    q = md.rollout(assign);
                }
                return to_numpy(q);
            },
            py::arg("assignment"), "Free-running S x T flow prediction from an S x T assignment matrix.")
        .def(
            "predict_step",
            [](const Model& md, const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& q) {
                return md.predict_step(from_numpy<RealMatrix>(a), from_numpy<RealMatrix>(q));
            },
            py::arg("assign_window"), py::arg("flow_window"), "One-step prediction from W x S windows.")
        .def("flow_only_variant", &Model::flow_only_variant);

    m.def(
        "load_dataset",
        [](const std::filesystem::path& dir) {
            const auto ds = load_dataset(dir);
            py::list runs;
            for (const auto& r : ds.runs) {
                py::dict d;
                d["sim_id"] = r.sim_id;
                d["assignment"] = to_numpy(r.assignment);
                d["flows"] = to_numpy(r.flows);
                d["travel_time"] = r.travel_time;
                runs.append(d);
            }
            py::dict split;
            split["train"] = ds.split.train;
            split["val"] = ds.split.val;
            split["test"] = ds.split.test;
            py::dict out;
            out["cells"] = ds.spec.cells;
            out["interval"] = ds.spec.interval;
            out["runs"] = runs;
            out["split"] = split;
            return out;
        },
        py::arg("directory"), "Dataset runs (A, Q, TT) and split indices.");
}
