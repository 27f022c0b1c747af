#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hybridsens/asa.hpp"
#include "hybridsens/csv.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/problems.hpp"
#include "hybridsens/verify.hpp"

using namespace hybridsens;

TEST_CASE("finite differences on the scalar switching problem") {
  const HybridSystemSpec spec = build("simple-hybrid");
  const GradientReport fd = fd_gradient(spec, spec.p_nominal);
  CHECK(fd.method == "FD");
  CHECK(fd.transitions == 3);
  CHECK(fd.gradient.size() == 1);
  // forward differences carry the truncation error G'' d / 2 with G'' = -8.8
  // and d = 2.9e-4
  CHECK(std::abs(fd.gradient(0) - (-2.3119531074438905 - 8.8 * 2.9e-4 / 2)) < 5e-5);
  CHECK_FALSE(fd.structural_change[0]);

  FdOptions central;
  central.central = true;
  const GradientReport c = fd_gradient(spec, spec.p_nominal, central);
  CHECK(std::abs(c.gradient(0) - (-2.3119531074438905)) < 2e-5);

  FdOptions serial;
  serial.parallel = false;
  const GradientReport again = fd_gradient(spec, spec.p_nominal, serial);
  CHECK(again.gradient(0) == fd.gradient(0));
}

TEST_CASE("a perturbation that removes switches is flagged") {
  const HybridSystemSpec spec = build("simple-hybrid");
  FdOptions o;
  o.eps = 0.5;
  const GradientReport fd = fd_gradient(spec, spec.p_nominal, o);
  CHECK(fd.structural_change[0]);
}

TEST_CASE("compare is deterministic and passes on the scalar problem") {
  const HybridSystemSpec spec = build("simple-hybrid");
  const Comparison a = compare(spec, spec.p_nominal);
  const Comparison b = compare(spec, spec.p_nominal);
  CHECK(a.passed);
  REQUIRE(a.reports.size() == 3);
  CHECK(a.reports[0].method == "FD");
  CHECK(a.reports[1].method == "FSA");
  CHECK(a.reports[2].method == "ASA");
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.reports[i].G == b.reports[i].G);
    CHECK(a.reports[i].gradient(0) == b.reports[i].gradient(0));
  }
  const std::string table = format_table(a, spec.parameter_names);
  CHECK(table.find("dG/dp") != std::string::npos);
  CHECK(table.find("agreement: PASS") != std::string::npos);
}

TEST_CASE("a zero integrand gives zero gradients everywhere") {
  HybridSystemSpec spec = build("simple-hybrid");
  spec.integrand.g = [](const Point&, const VectorXd&) { return 0.0; };
  spec.integrand.partials = [](const Point&, const VectorXd&) {
    IntegrandPartials ip;
    ip.y = RowVectorXd::Zero(1);
    ip.z = RowVectorXd::Zero(0);
    ip.p = RowVectorXd::Zero(1);
    return ip;
  };
  const Comparison c = compare(spec, spec.p_nominal);
  for (const auto& r : c.reports) {
    CHECK(r.G == 0.0);
    CHECK(r.gradient(0) == 0.0);
  }
}

TEST_CASE("trajectory CSV round-trips exactly") {
  const HybridSystemSpec spec = build("em", {{"tf", 1.0}});
  const ForwardResult fwd = run_fsa(spec, spec.p_nominal);
  std::stringstream ss;
  write_trajectory(ss, spec, fwd);
  const CsvTable t = read_csv(ss);
  REQUIRE(t.header.size() == 1 + 2 + 1 + 2 * 4 + 4);
  CHECK(t.header[0] == "t");
  CHECK(t.header[1] == "u");
  CHECK(t.header[3] == "z");
  CHECK(t.header[4] == "s_1_1");
  CHECK(t.header.back() == "w_1_4");
  std::size_t row = 0;
  for (const auto& tr : fwd.traces) {
    const StepRecord& first = tr.steps.front();
    CHECK(t.rows[row][0] == first.t_left);
    CHECK(t.rows[row][1] == first.y_left(0));
    ++row;
    for (const auto& st : tr.steps) {
      const auto& r = t.rows[row++];
      CHECK(r[0] == st.t_right);
      CHECK(r[1] == st.y_right(0));
      CHECK(r[2] == st.y_right(1));
      CHECK(r[3] == st.z_right(0));
      CHECK(r[4] == st.s_right(0, 0));
      CHECK(r[15] == st.w_right(0, 3));
    }
  }
  CHECK(row == t.rows.size());
}

TEST_CASE("transition, adjoint and gradient CSV layouts") {
  const HybridSystemSpec spec = build("simple-hybrid");
  const ForwardResult fwd = simulate(spec, spec.p_nominal);
  std::stringstream tr;
  write_transitions(tr, spec, fwd);
  CHECK(tr.str().rfind("i,t_i,mode_from,mode_to\n", 0) == 0);
  const CsvTable tt = read_csv(tr);
  CHECK(tt.rows.size() == 3);
  CHECK(tt.rows[0][1] == fwd.transitions[0].t);

  const ForwardResult sens = run_fsa(spec, spec.p_nominal);
  std::stringstream ts;
  write_transitions(ts, spec, sens);
  CHECK(ts.str().rfind("i,t_i,mode_from,mode_to,tau_1\n", 0) == 0);

  const AdjointResult adj = run_asa(spec, fwd);
  std::stringstream as;
  write_adjoint(as, spec, adj);
  const CsvTable at = read_csv(as);
  CHECK(at.header == std::vector<std::string>{"t", "mode", "lambda_1"});
  CHECK(at.rows.size() == adj.trajectory.size());

  GradientReport r;
  r.method = "ASA";
  r.G = adj.G;
  r.gradient = adj.dGdp;
  std::stringstream gs;
  write_gradients(gs, {r});
  const CsvTable gt = read_csv(gs);
  CHECK(gt.header == std::vector<std::string>{"method", "G", "dGdp_1"});
  CHECK(gt.rows[0][1] == adj.G);
  CHECK(gt.rows[0][2] == adj.dGdp(0));
}

TEST_CASE("number formatting keeps every digit") {
  for (const double v : {0.1, 1.0 / 3.0, -2.3119531074438905, 1e-300, 6.02214076e23}) {
    std::stringstream ss("x\n" + format_number(v) + "\n");
    CHECK(read_csv(ss).rows[0][0] == v);
  }
}
