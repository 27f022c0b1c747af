#include <cmath>
#include <random>

#include "doctest.h"
#include "hybridsens/asa.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/problems.hpp"

using namespace hybridsens;

namespace {

AdjointResult adjoint(const HybridSystemSpec& spec, const Tolerances& tol, ForwardResult* out = nullptr) {
  ForwardOptions o;
  o.tol = tol;
  ForwardResult fwd = simulate(spec, spec.p_nominal, o);
  AdjointOptions ao;
  ao.tol = tol;
  AdjointResult a = run_asa(spec, fwd, ao);
  if (out) *out = std::move(fwd);
  return a;
}

}  // namespace

TEST_CASE("simple-hybrid adjoint gradient") {
  const HybridSystemSpec spec = build("simple-hybrid");
  const AdjointResult a = adjoint(spec, {});
  CHECK(std::abs(a.G - 20.029074653359594) < 1e-6);
  CHECK(std::abs(a.dGdp(0) - (-2.3119531074438905)) < 1e-5);
  CHECK(a.jumps.size() == 3);
  CHECK(a.jumps.front().index == 3);
}

TEST_CASE("linear-hi2 adjoint gradient matches the symbolic reference") {
  const HybridSystemSpec spec = build("linear-hi2");
  const AdjointResult a = adjoint(spec, {1e-10, 1e-13});
  const double ref[4] = {1.2, -0.31775998388026520, 0.98725004291162595, 0.058525596664594420};
  CHECK(std::abs(a.G - 1.3816041554661066) < 1e-6);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(a.dGdp(k) - ref[k]) < 1e-6);
}

TEST_CASE("linear-hi2 adjoint matches FSA for the other integrands") {
  for (const double which : {1.0, 2.0}) {
    const HybridSystemSpec spec = build("linear-hi2", {{"integrand", which}});
    const Tolerances tol{1e-10, 1e-13};
    const AdjointResult a = adjoint(spec, tol);
    const ForwardResult f = run_fsa(spec, spec.p_nominal, tol);
    for (Index k = 0; k < spec.n_p(); ++k) CHECK(std::abs(a.dGdp(k) - f.dGdp(k)) < 1e-6);
  }
}

TEST_CASE("algebraic adjoint constraint holds along backward trajectories") {
  for (const std::string name : {"em", "linear-hi2"}) {
    const HybridSystemSpec spec = build(name, name == "em" ? Overrides{{"tf", 3.0}} : Overrides{});
    const Tolerances tol{1e-8, 1e-12};
    const AdjointResult a = adjoint(spec, tol);
    CHECK(!a.trajectory.empty());
    CHECK(a.max_algebraic_residual <= 10 * tol.atol);
  }
}

TEST_CASE("jump linearization agrees with fsa_jump") {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  for (const std::string name : {"simple-hybrid", "linear-hi2", "em"}) {
    const HybridSystemSpec spec = build(name);
    const ForwardResult fwd = simulate(spec, spec.p_nominal);
    const TransitionRecord& rec = fwd.transitions.front();
    const VectorXd& p = spec.p_nominal;
    const Index ny = spec.n_y;
    const Index np = spec.n_p();
    MatrixXd sstar, wstar;
    if (spec.dae_class == DaeClass::Index1Memory) {
      sstar = MatrixXd::Zero(ny, np);
      wstar = MatrixXd::Zero(spec.n_z, np);
    }
    const JumpLinearization L = build_jump_linearization(spec, rec, p, sstar, wstar);
    for (int trial = 0; trial < 5; ++trial) {
      MatrixXd s = MatrixXd::NullaryExpr(ny, np, [&] { return nd(rng); });
      const SensitivityState before =
          complete_sensitivity(spec, rec.mode_before, rec.before, p, s, sstar, wstar, true);
      const JumpResult j = fsa_jump(spec, rec, p, before, true);
      const RowVectorXd tau = L.alpha + L.beta * s;
      const MatrixXd after = L.Gamma + L.Delta * s;
      CHECK((j.tau - tau).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, tau.cwiseAbs().maxCoeff()));
      CHECK((j.after.s - after).cwiseAbs().maxCoeff() <=
            1e-10 * std::max(1.0, after.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("memory transfer reproduces the algebraic sensitivity at transitions") {
  const HybridSystemSpec spec = build("em", {{"tf", 3.0}});
  const VectorXd& p = spec.p_nominal;
  const ForwardResult f = run_fsa(spec, p);
  REQUIRE(f.jumps.size() >= 2);
  MatrixXd sstar = f.s0;
  MatrixXd wstar = f.w0;
  for (std::size_t i = 0; i < f.jumps.size(); ++i) {
    const MemoryTransfer m = memory_transfer(spec, f.transitions[i], p);
    const SensitivityJump& j = f.jumps[i];
    const MatrixXd w = m.phi_y * j.s_before + m.phi_ystar * sstar + m.phi_zstar * wstar + m.phi_p;
    CHECK((w - j.w_before).cwiseAbs().maxCoeff() < 1e-6);
    sstar = j.s_after;
    wstar = j.w_after;
  }
}

TEST_CASE("adjoint of a zero integrand is zero") {
  HybridSystemSpec spec = build("simple-hybrid");
  spec.integrand.g = [](const Point&, const VectorXd&) { return 0.0; };
  spec.integrand.partials = [](const Point&, const VectorXd&) {
    IntegrandPartials ip;
    ip.y = RowVectorXd::Zero(1);
    ip.z = RowVectorXd::Zero(0);
    ip.p = RowVectorXd::Zero(1);
    return ip;
  };
  const AdjointResult a = adjoint(spec, {});
  CHECK(a.G == 0.0);
  CHECK(a.dGdp(0) == 0.0);
}

TEST_CASE("adjoint residual helper vanishes at terminal conditions") {
  const HybridSystemSpec spec = build("linear-hi2");
  const ForwardResult fwd = simulate(spec, spec.p_nominal);
  const TerminalConditions tc = adjoint_final_conditions(spec, fwd);
  const Point pt = fwd.traces.back().at(spec.tf);
  CHECK(adjoint_algebraic_residual(spec, tc.values.mode, pt, spec.p_nominal, tc.values).norm() < 1e-8);
}
