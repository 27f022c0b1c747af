#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hybridsens/hybridsens.hpp"

namespace py = pybind11;
namespace hs = hybridsens;

namespace {

struct Problem {
  hs::HybridSystemSpec spec;

  Eigen::VectorXd params(const std::optional<Eigen::VectorXd>& p) const {
    if (!p) return spec.p_nominal;
    if (p->size() != spec.n_p()) {
      throw hs::HybridError(hs::ErrorKind::InvalidConfiguration,
                            "expected " + std::to_string(spec.n_p()) + " parameters");
    }
    return *p;
  }
};

hs::Tolerances tol(double rtol, double atol) { return {rtol, atol}; }

py::dict trajectory(const hs::HybridSystemSpec& spec, const hs::ForwardResult& fwd) {
  std::vector<double> t;
  std::vector<int> mode;
  std::vector<Eigen::VectorXd> y, z;
  for (const auto& tr : fwd.traces) {
    if (tr.steps.empty()) continue;
    t.push_back(tr.steps.front().t_left);
    mode.push_back(static_cast<int>(tr.mode));
    y.push_back(tr.steps.front().y_left);
    z.push_back(tr.steps.front().z_left);
    for (const auto& s : tr.steps) {
      t.push_back(s.t_right);
      mode.push_back(static_cast<int>(tr.mode));
      y.push_back(s.y_right);
      z.push_back(s.z_right);
    }
  }
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(t.size()), spec.n_y);
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(t.size()), spec.n_z);
  for (std::size_t i = 0; i < t.size(); ++i) {
    Y.row(static_cast<Eigen::Index>(i)) = y[i].transpose();
    if (spec.n_z) Z.row(static_cast<Eigen::Index>(i)) = z[i].transpose();
  }
  py::list transitions;
  for (std::size_t i = 0; i < fwd.transitions.size(); ++i) {
    const auto& r = fwd.transitions[i];
    py::dict d;
    d["i"] = r.index;
    d["t"] = r.t;
    d["mode_from"] = r.mode_before;
    d["mode_to"] = r.mode_after;
    if (i < fwd.jumps.size()) d["tau"] = Eigen::RowVectorXd(fwd.jumps[i].tau);
    transitions.append(d);
  }
  py::dict out;
  out["G"] = fwd.G;
  out["t"] = t;
  out["mode"] = mode;
  out["y"] = Y;
  out["z"] = Z;
  out["transitions"] = transitions;
  out["warnings"] = fwd.warnings;
  return out;
}

py::dict report(const hs::GradientReport& r) {
  py::dict d;
  d["method"] = r.method;
  d["G"] = r.G;
  d["dGdp"] = Eigen::RowVectorXd(r.gradient);
  d["transitions"] = r.transitions;
  d["seconds"] = r.wall_seconds;
  if (!r.structural_change.empty()) d["structural_change"] = r.structural_change;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Forward and adjoint sensitivities for hybrid DAE systems";

  py::register_exception<hs::HybridError>(m, "HybridError");

  m.def("problem_names", &hs::problem_names);

  py::class_<Problem>(m, "Problem")
      .def(py::init([](const std::string& name, const std::map<std::string, double>& overrides) {
             return Problem{hs::build(name, overrides)};
           }),
           py::arg("name"), py::arg("overrides") = std::map<std::string, double>{})
      .def_property_readonly("name", [](const Problem& p) { return p.spec.name; })
      .def_property_readonly("dae_class",
                             [](const Problem& p) { return std::string(hs::to_string(p.spec.dae_class)); })
      .def_property_readonly("n_y", [](const Problem& p) { return p.spec.n_y; })
      .def_property_readonly("n_z", [](const Problem& p) { return p.spec.n_z; })
      .def_property_readonly("t0", [](const Problem& p) { return p.spec.t0; })
      .def_property_readonly("tf", [](const Problem& p) { return p.spec.tf; })
      .def_property_readonly("parameter_names", [](const Problem& p) { return p.spec.parameter_names; })
      .def_property_readonly("p_nominal", [](const Problem& p) { return p.spec.p_nominal; })
      .def(
          "simulate",
          [](const Problem& self, std::optional<Eigen::VectorXd> p, double rtol, double atol) {
            hs::ForwardOptions o;
            o.tol = tol(rtol, atol);
            hs::ForwardResult fwd;
            {
              py::gil_scoped_release release;
              fwd = hs::simulate(self.spec, self.params(p), o);
            }
            return trajectory(self.spec, fwd);
          },
          py::arg("p") = py::none(), py::arg("rtol") = 1e-8, py::arg("atol") = 1e-12)
      .def(
          "fsa",
          [](const Problem& self, std::optional<Eigen::VectorXd> p, double rtol, double atol) {
            hs::ForwardResult fwd;
            {
              py::gil_scoped_release release;
              fwd = hs::run_fsa(self.spec, self.params(p), tol(rtol, atol));
            }
            py::dict d = trajectory(self.spec, fwd);
            d["dGdp"] = Eigen::RowVectorXd(fwd.dGdp);
            return d;
          },
          py::arg("p") = py::none(), py::arg("rtol") = 1e-8, py::arg("atol") = 1e-12)
      .def(
          "asa",
          [](const Problem& self, std::optional<Eigen::VectorXd> p, double rtol, double atol) {
            hs::AdjointResult adj;
            {
              py::gil_scoped_release release;
              hs::ForwardOptions o;
              o.tol = tol(rtol, atol);
              const hs::ForwardResult fwd = hs::simulate(self.spec, self.params(p), o);
              hs::AdjointOptions ao;
              ao.tol = o.tol;
              adj = hs::run_asa(self.spec, fwd, ao);
            }
            std::vector<double> t;
            std::vector<Eigen::VectorXd> lam, mu;
            for (const auto& v : adj.trajectory) {
              t.push_back(v.t);
              lam.push_back(v.lambda);
              mu.push_back(v.mu);
            }
            py::dict d;
            d["G"] = adj.G;
            d["dGdp"] = Eigen::RowVectorXd(adj.dGdp);
            d["t"] = t;
            d["lambda"] = lam;
            d["mu"] = mu;
            d["max_algebraic_residual"] = adj.max_algebraic_residual;
            return d;
          },
          py::arg("p") = py::none(), py::arg("rtol") = 1e-8, py::arg("atol") = 1e-12)
      .def(
          "fd_gradient",
          [](const Problem& self, std::optional<Eigen::VectorXd> p, double eps, bool central,
             double rtol, double atol) {
            hs::FdOptions o;
            o.tol = tol(rtol, atol);
            o.eps = eps;
            o.central = central;
            hs::GradientReport r;
            {
              py::gil_scoped_release release;
              r = hs::fd_gradient(self.spec, self.params(p), o);
            }
            return report(r);
          },
          py::arg("p") = py::none(), py::arg("eps") = 1e-4, py::arg("central") = false,
          py::arg("rtol") = 1e-8, py::arg("atol") = 1e-12)
      .def(
          "compare",
          [](const Problem& self, std::optional<Eigen::VectorXd> p, double eps, double rtol,
             double atol) {
            hs::FdOptions o;
            o.tol = tol(rtol, atol);
            o.eps = eps;
            hs::Comparison c;
            {
              py::gil_scoped_release release;
              c = hs::compare(self.spec, self.params(p), o);
            }
            py::list reps;
            for (const auto& r : c.reports) reps.append(report(r));
            py::dict d;
            d["reports"] = reps;
            d["passed"] = c.passed;
            d["max_abs_deviation"] = Eigen::RowVectorXd(c.max_abs_deviation);
            d["table"] = hs::format_table(c, self.spec.parameter_names);
            return d;
          },
          py::arg("p") = py::none(), py::arg("eps") = 1e-4, py::arg("rtol") = 1e-8,
          py::arg("atol") = 1e-12);

  m.def("em_constants", [](const Eigen::VectorXd& p) {
    const auto c = hs::em_constants(p);
    return py::make_tuple(c.u0, c.fbar);
  });
  m.def("em_memory_update", &hs::em_memory_update, py::arg("ustar"), py::arg("zstar"),
        py::arg("xi"), py::arg("p"));
  m.def("em_stress", &hs::em_stress, py::arg("u"), py::arg("ustar"), py::arg("zstar"),
        py::arg("xi"), py::arg("p"));
}
