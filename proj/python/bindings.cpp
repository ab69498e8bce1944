#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cutoseen/harness.hpp"

namespace py = pybind11;
using namespace cutoseen;

namespace {

std::pair<double, double> vec_pair(const Vec2& v) { return {v.x, v.y}; }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Unfitted finite element solver for two-phase Oseen flow with a moving interface";

    py::class_<MarkerChain>(m, "MarkerChain")
        .def(py::init<>())
        .def_readwrite("eta", &MarkerChain::eta)
        .def_property_readonly("points",
                               [](const MarkerChain& c) {
                                   std::vector<std::pair<double, double>> out;
                                   for (const Vec2& p : c.points) out.push_back(vec_pair(p));
                                   return out;
                               })
        .def_readonly("params", &MarkerChain::params)
        .def("count", &MarkerChain::count)
        .def("to_json", &MarkerChain::to_json)
        .def_static("from_json", &MarkerChain::from_json);

    m.def("circle_markers",
          [](double cx, double cy, double r, int count) {
              return circle_markers({cx, cy}, r, count);
          },
          py::arg("cx"), py::arg("cy"), py::arg("radius"), py::arg("count"));

    py::enum_<Side>(m, "Side")
        .value("Inside1", Side::Inside1)
        .value("Inside2", Side::Inside2)
        .value("OnCurve", Side::OnCurve);

    py::class_<SplineInterface>(m, "SplineInterface")
        .def("eval",
             [](const SplineInterface& s, double l, int deriv) {
                 return vec_pair(s.eval(l, deriv));
             },
             py::arg("l"), py::arg("deriv") = 0)
        .def("unit_normal",
             [](const SplineInterface& s, double l) { return vec_pair(s.unit_normal(l)); })
        .def("side_of",
             [](const SplineInterface& s, double x, double y) { return s.side_of({x, y}); })
        .def("edge_intersections",
             [](const SplineInterface& s, double ax, double ay, double bx, double by) {
                 std::vector<std::pair<double, std::pair<double, double>>> out;
                 for (const auto& hit : s.edge_intersections({ax, ay}, {bx, by}))
                     out.push_back({hit.l, vec_pair(hit.point)});
                 return out;
             })
        .def_property_readonly("period", &SplineInterface::period)
        .def("enclosed_area", &SplineInterface::enclosed_area)
        .def("length", &SplineInterface::length)
        .def("polyline_csv", &SplineInterface::polyline_csv, py::arg("samples_per_segment") = 8)
        .def("to_svg", &SplineInterface::to_svg, py::arg("samples_per_segment") = 8);

    m.def("fit_periodic_spline", &fit_periodic_spline);
    m.def("redistribute_markers",
          [](const MarkerChain& c, double eta) { return redistribute_markers(c, eta); });

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("k", &RunConfig::k)
        .def_readwrite("nc", &RunConfig::nc)
        .def_readwrite("tau", &RunConfig::tau)
        .def_readwrite("T", &RunConfig::T)
        .def_readwrite("gamma0", &RunConfig::gamma0)
        .def_readwrite("gamma1", &RunConfig::gamma1)
        .def_readwrite("nu1", &RunConfig::nu1)
        .def_readwrite("nu2", &RunConfig::nu2)
        .def_readwrite("eta", &RunConfig::eta)
        .def_readwrite("case_id", &RunConfig::case_id)
        .def_readwrite("quad_order", &RunConfig::quad_order)
        .def_readwrite("snapshot_times", &RunConfig::snapshot_times);

    py::class_<StepDiagnostics>(m, "StepDiagnostics")
        .def_readonly("n", &StepDiagnostics::n)
        .def_readonly("t", &StepDiagnostics::t)
        .def_readonly("velocity_l2", &StepDiagnostics::velocity_l2)
        .def_readonly("residual", &StepDiagnostics::solver_residual)
        .def_readonly("cut_cells", &StepDiagnostics::cut_cells)
        .def_readonly("mean_constraint", &StepDiagnostics::mean_constraint)
        .def_readonly("interface_area", &StepDiagnostics::interface_area);

    py::class_<RunResult>(m, "RunResult")
        .def_readonly("e_u0", &RunResult::e_u0)
        .def_readonly("e_u1", &RunResult::e_u1)
        .def_readonly("e_p0", &RunResult::e_p0)
        .def_readonly("e_p1", &RunResult::e_p1)
        .def_readonly("failed", &RunResult::failed)
        .def_readonly("failure", &RunResult::failure)
        .def_readonly("diagnostics", &RunResult::diagnostics)
        .def_readonly("interface_csv", &RunResult::interface_csv)
        .def_readonly("interface_svg", &RunResult::interface_svg)
        .def("to_json", &RunResult::to_json)
        .def("diagnostics_csv", &RunResult::diagnostics_csv);

    m.def("run_case",
          [](RunConfig cfg) {
              TimeLoop loop(cfg, make_case(cfg.case_id, cfg.nu1, cfg.nu2));
              return loop.run();
          },
          py::arg("config"), "Run a configured case end to end");

    py::class_<EocRow>(m, "EocRow")
        .def_readonly("nc", &EocRow::nc)
        .def_readonly("h", &EocRow::h)
        .def_readonly("e_u0", &EocRow::e_u0)
        .def_readonly("e_u1", &EocRow::e_u1)
        .def_readonly("e_p0", &EocRow::e_p0)
        .def_readonly("e_p1", &EocRow::e_p1)
        .def_readonly("ok", &EocRow::ok);

    py::class_<EocTable>(m, "EocTable")
        .def_readonly("rows", &EocTable::rows)
        .def("to_text", &EocTable::to_text)
        .def("to_csv", &EocTable::to_csv);

    m.def("convergence_study",
          [](RunConfig base, const std::vector<int>& levels) {
              StudyResult res = convergence_study(base, levels);
              return py::make_tuple(res.table, res.runs);
          },
          py::arg("config"), py::arg("levels"));

    m.def("tracking_order_study",
          [](int k, const std::vector<int>& levels, double T) {
              const TrackingStudy s = tracking_order_study(k, levels, T);
              return py::make_tuple(s.taus, s.sup_errors, s.order);
          },
          py::arg("k"), py::arg("levels"), py::arg("T"));

    m.def("case_functions",
          [](const std::string& id, double nu1, double nu2, int phase, double x, double y,
             double t) {
              const ProblemCase c = make_case(id, nu1, nu2);
              const CasePoint pt = emit_case_functions(c, phase, {x, y}, t, {1.0, 0.0});
              py::dict out;
              out["u"] = vec_pair(pt.u);
              out["p"] = pt.p;
              out["f"] = vec_pair(pt.f);
              out["w"] = vec_pair(pt.w);
              out["g0"] = vec_pair(pt.g0);
              out["g1"] = vec_pair(pt.g1);
              return out;
          });
}
