#include <cmath>

#include "doctest.h"
#include "hybridsens/errors.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/problems.hpp"
#include "hybridsens/verify.hpp"

using namespace hybridsens;

TEST_CASE("simple-hybrid sensitivities") {
  const HybridSystemSpec spec = build("simple-hybrid");
  const ForwardResult r = run_fsa(spec, spec.p_nominal);
  REQUIRE(r.jumps.size() == 3);
  const double t1 = r.transitions[0].t;

  double before = 0.0;
  for (const auto& tr : r.traces)
    for (const auto& st : tr.steps)
      if (st.t_right < t1) before = std::max(before, st.s_right.cwiseAbs().maxCoeff());
  CHECK(before <= 1e-10);

  const SensitivityJump& j = r.jumps[0];
  CHECK(std::abs(j.tau(0) - 0.31570755009809896) < 1e-6);
  CHECK(std::abs((j.s_after - j.s_before)(0, 0) - (-1.6456550058639949)) < 1e-6);
  CHECK(std::abs(r.dGdp(0) - (-2.3119531074438905)) < 1e-6);
}

TEST_CASE("sensitivity residual vanishes along the trajectory") {
  const HybridSystemSpec spec = build("em", {{"tf", 2.0}});
  const ForwardResult r = run_fsa(spec, spec.p_nominal);
  double worst = 0.0;
  double scale = 0.0;
  for (const auto& tr : r.traces) {
    const Mode& mode = spec.modes[tr.mode];
    MatrixXd sstar, wstar;
    // memory sensitivities of this mode: the values at its entry
    sstar = tr.steps.front().s_left;
    wstar = tr.steps.front().w_left;
    for (const auto& st : tr.steps) {
      Point pt = tr.at(st.t_right);
      pt.yd = st.yd_right;
      SensitivityState s{st.s_right, st.sd_right, st.w_right};
      const MatrixXd res = fsa_rhs(mode.dynamics, pt, spec.p_nominal, s, sstar, wstar);
      worst = std::max(worst, res.cwiseAbs().maxCoeff());
      scale = std::max(scale, st.w_right.cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-8 * std::max(1.0, scale));
}

TEST_CASE("linear-hi2 forward sensitivities agree with central differences") {
  const HybridSystemSpec spec = build("linear-hi2");
  const Tolerances tol{1e-10, 1e-13};
  const ForwardResult r = run_fsa(spec, spec.p_nominal, tol);
  FdOptions o;
  o.tol = tol;
  o.central = true;
  o.eps = 1e-5;
  const GradientReport fd = fd_gradient(spec, spec.p_nominal, o);
  for (Index k = 0; k < spec.n_p(); ++k) CHECK(std::abs(r.dGdp(k) - fd.gradient(k)) < 1e-5);
}

TEST_CASE("transition-time sensitivity rejects a grazing guard") {
  GuardPartials gp;
  gp.yd = RowVectorXd::Zero(1);
  gp.y = RowVectorXd::Zero(1);
  gp.z = RowVectorXd::Zero(0);
  gp.p = RowVectorXd::Ones(1);
  Point pt;
  pt.yd = VectorXd::Ones(1);
  pt.y = VectorXd::Ones(1);
  pt.z = VectorXd::Zero(0);
  HiddenDerivatives hd;
  hd.ydd = VectorXd::Zero(1);
  hd.zd = VectorXd::Zero(0);
  SensitivityState s{MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Zero(0, 1)};
  CHECK_THROWS_AS(transition_time_sensitivity(gp, pt, hd, s), HybridError);
}
