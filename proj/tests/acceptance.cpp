// Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>

#include "hybridsens/hybridsens.hpp"

using namespace hybridsens;

namespace {

using Clock = std::chrono::steady_clock;

std::map<int, std::string> lines;
int failures = 0;

void report(int id, bool ok, const std::string& what) {
  lines[id] = std::string(ok ? "PASS" : "FAIL") + "  criterion " + std::to_string(id) + ": " + what;
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string vec(const RowVectorXd& v) {
  std::string s = "[";
  for (Index k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt("%.6g", v(k));
  return s + "]";
}

double seconds(Clock::time_point a) {
  return std::chrono::duration<double>(Clock::now() - a).count();
}

const Tolerances kTol{1e-8, 1e-12};

// Largest post-transition consistency residual seen across all runs.
double worst_consistency = 0.0;

void note(const ForwardResult& r) {
  worst_consistency = std::max(worst_consistency, r.max_consistency_residual);
}

void simple_hybrid() {
  const HybridSystemSpec spec = build("simple-hybrid");
  const double ref = -2.31195;

  const GradientReport fsa = fsa_gradient(spec, spec.p_nominal, kTol);
  const GradientReport asa = asa_gradient(spec, spec.p_nominal, kTol);
  // The forward quotient with d = 2.9e-4 is biased by G'' d / 2 = -1.3e-3;
  // the central quotient is used here and the forward one is shown.
  FdOptions fo;
  fo.tol = kTol;
  fo.parallel = false;
  const GradientReport forward = fd_gradient(spec, spec.p_nominal, fo);
  fo.central = true;
  const auto t0 = Clock::now();
  const GradientReport fd = fd_gradient(spec, spec.p_nominal, fo);
  const double fd_time = seconds(t0);

  bool ok = true;
  std::string detail;
  for (const GradientReport* r : {&fd, &fsa, &asa}) {
    const double secs = r == &fd ? fd_time : r->wall_seconds;
    ok = ok && std::abs(r->gradient(0) - ref) <= 1e-3 && secs < 1.0;
    detail += " " + r->method + "=" + fmt("%.6f", r->gradient(0)) + fmt(" (%.3fs)", secs);
  }
  detail += " (forward FD " + fmt("%.6f", forward.gradient(0)) + ")";
  report(1, ok, "simple-hybrid dG/dp within 1e-3 of -2.31195, <1 s each:" + detail);

  const ForwardResult r = run_fsa(spec, spec.p_nominal, kTol);
  note(r);
  const double t1 = r.transitions.at(0).t;
  double before = 0.0;
  for (const auto& tr : r.traces)
    for (const auto& st : tr.steps) {
      if (st.t_left < t1) before = std::max(before, st.s_left.cwiseAbs().maxCoeff());
      if (st.t_right < t1) before = std::max(before, st.s_right.cwiseAbs().maxCoeff());
    }
  const double jump = (r.jumps.at(0).s_after - r.jumps.at(0).s_before)(0, 0);
  report(2, before <= 1e-10 && std::abs(jump) > 0.1,
         "simple-hybrid max|s| before t1 = " + fmt("%.2e", before) + ", jump at t1 = " +
             fmt("%.5f", jump));
}

void em() {
  const auto start = Clock::now();
  const HybridSystemSpec spec = build("em");
  const VectorXd& p = spec.p_nominal;

  const ForwardResult f = run_fsa(spec, p, kTol);
  note(f);
  ForwardOptions o;
  o.tol = kTol;
  const ForwardResult plain = simulate(spec, p, o);
  note(plain);
  AdjointOptions ao;
  ao.tol = kTol;
  const AdjointResult a = run_asa(spec, plain, ao);
  FdOptions fo;
  fo.tol = kTol;
  const GradientReport fd = fd_gradient(spec, p, fo);
  const double total = seconds(start);

  RowVectorXd band(4), fsa_ref(4), asa_ref(4), fd_ref(4);
  band << 2e-7, 5e-6, 5e-8, 1e-7;
  fsa_ref << -1.337e-5, 3.266e-3, -1.518e-6, 0.0;
  asa_ref << -1.335e-5, 3.267e-3, -1.540e-6, 0.0;
  fd_ref << -1.338e-5, 3.267e-3, -1.534e-6, -6.07e-9;

  bool ok = std::abs(f.G - 0.04994) <= 1e-4 && total < 60.0;
  for (Index k = 0; k < 4; ++k) {
    ok = ok && std::abs(f.dGdp(k) - fsa_ref(k)) <= band(k);
    ok = ok && std::abs(a.dGdp(k) - asa_ref(k)) <= band(k);
    if (k < 3) ok = ok && std::abs(fd.gradient(k) - fd_ref(k)) <= 0.01 * std::abs(fd_ref(k));
  }
  report(3, ok,
         "em G = " + fmt("%.6f", f.G) + ", FSA " + vec(f.dGdp) + ", ASA " + vec(a.dGdp) +
             ", FD " + vec(fd.gradient) + ", " + fmt("%.1f s", total));
}

void linear_hi2() {
  const HybridSystemSpec spec = build("linear-hi2");
  const VectorXd& p = spec.p_nominal;
  const Tolerances tol{1e-10, 1e-13};

  const ForwardResult f = run_fsa(spec, p, tol);
  note(f);
  double y1 = 0.0;
  for (const auto& tr : f.traces)
    for (const auto& st : tr.steps) y1 = std::max(y1, std::abs(st.y_right(0) - std::sin(st.t_right)));

  ForwardOptions o;
  o.tol = tol;
  const ForwardResult plain = simulate(spec, p, o);
  note(plain);
  AdjointOptions ao;
  ao.tol = tol;
  const AdjointResult a = run_asa(spec, plain, ao);
  // G is quadratic in the parameters, so the forward quotient is off by
  // G_pp d / 2; the central quotient is exact up to integration error.
  FdOptions fo;
  fo.tol = tol;
  const GradientReport forward = fd_gradient(spec, p, fo);
  fo.central = true;
  const GradientReport fd = fd_gradient(spec, p, fo);

  const double d_fsa = (a.dGdp - f.dGdp).cwiseAbs().maxCoeff();
  const double d_fd = (a.dGdp - fd.gradient).cwiseAbs().maxCoeff();
  report(4, f.transitions.size() == 1 && y1 <= 10 * tol.rtol && d_fsa <= 1e-6 && d_fd <= 1e-4,
         "linear-hi2 max|y1 - sin t| = " + fmt("%.2e", y1) + ", |ASA-FSA| = " +
             fmt("%.2e", d_fsa) + ", |ASA-FD| = " + fmt("%.2e", d_fd) + " (forward FD " +
             fmt("%.2e", (a.dGdp - forward.gradient).cwiseAbs().maxCoeff()) + ")");
}

void invariants() {
  double alg = 0.0;
  double hidden = 0.0;
  double jump = 0.0;
  std::mt19937 rng(2024);
  std::normal_distribution<double> nd;
  for (const std::string name : problem_names()) {
    const HybridSystemSpec spec = build(name);
    const VectorXd& p = spec.p_nominal;
    ForwardOptions o;
    o.tol = kTol;
    const ForwardResult fwd = simulate(spec, p, o);
    note(fwd);
    AdjointOptions ao;
    ao.tol = kTol;
    alg = std::max(alg, run_asa(spec, fwd, ao).max_algebraic_residual);

    if (spec.dae_class == DaeClass::Hessenberg2) {
      for (const auto& tr : fwd.traces)
        for (const auto& st : tr.steps)
          hidden = std::max(hidden, hi2_hidden_residual(spec, tr.mode, tr.at(st.t_right), p).norm());
    }

    const TransitionRecord& rec = fwd.transitions.front();
    MatrixXd sstar, wstar;
    if (spec.dae_class == DaeClass::Index1Memory) {
      sstar = MatrixXd::Zero(spec.n_y, spec.n_p());
      wstar = MatrixXd::Zero(spec.n_z, spec.n_p());
    }
    const JumpLinearization L = build_jump_linearization(spec, rec, p, sstar, wstar);
    for (int trial = 0; trial < 5; ++trial) {
      const MatrixXd s = MatrixXd::NullaryExpr(spec.n_y, spec.n_p(), [&] { return nd(rng); });
      const SensitivityState before =
          complete_sensitivity(spec, rec.mode_before, rec.before, p, s, sstar, wstar, true);
      const JumpResult j = fsa_jump(spec, rec, p, before, true);
      jump = std::max(jump, (j.tau - (L.alpha + L.beta * s)).cwiseAbs().maxCoeff());
      jump = std::max(jump, (j.after.s - (L.Gamma + L.Delta * s)).cwiseAbs().maxCoeff());
    }
  }
  const double limit = 10 * kTol.atol;
  report(5,
         alg <= limit && hidden <= limit && worst_consistency <= 1e-8 && jump <= 1e-10,
         "adjoint algebraic residual " + fmt("%.2e", alg) + ", hidden constraint " +
             fmt("%.2e", hidden) + ", post-transition consistency " +
             fmt("%.2e", worst_consistency) + ", jump linearization " + fmt("%.2e", jump));
}

void memory_recurrence() {
  const HybridSystemSpec full = build("em");
  const ForwardResult probe = simulate(full, full.p_nominal);
  const double tf = 0.5 * (probe.transitions.at(1).t + probe.transitions.at(2).t);
  const HybridSystemSpec spec = build("em", {{"tf", tf}});
  const VectorXd& p = spec.p_nominal;

  const ForwardResult f = run_fsa(spec, p, kTol);
  note(f);
  MatrixXd sstar = f.s0;
  MatrixXd wstar = f.w0;
  double general = 0.0;
  double literal = 0.0;
  for (std::size_t i = 0; i < f.jumps.size(); ++i) {
    const MemoryTransfer m = memory_transfer(spec, f.transitions[i], p);
    const SensitivityJump& j = f.jumps[i];
    const MatrixXd w = m.phi_y * j.s_before + m.phi_ystar * sstar + m.phi_zstar * wstar + m.phi_p;
    general = std::max(general, (w - j.w_before).cwiseAbs().maxCoeff());
    // Literal form w^i = w^{i-1} + sigma_u (s_u^i - s_u^{i-1}) + sigma_p.
    const MatrixXd lit = wstar + m.phi_y.col(0) * (j.s_before.row(0) - sstar.row(0)) + m.phi_p;
    literal = std::max(literal, (lit - j.w_before).cwiseAbs().maxCoeff());
    sstar = j.s_after;
    wstar = j.w_after;
  }

  ForwardOptions o;
  o.tol = kTol;
  const ForwardResult plain = simulate(spec, p, o);
  AdjointOptions ao;
  ao.tol = kTol;
  const AdjointResult a = run_asa(spec, plain, ao);
  const double grad = (a.dGdp - f.dGdp).cwiseAbs().maxCoeff();

  report(6, f.jumps.size() == 2 && general <= 1e-6 && grad <= 1e-6,
         "em two-transition run: memory recurrence vs FSA " + fmt("%.2e", general) +
             " (literal increment form " + fmt("%.2e", literal) + "), |ASA-FSA| = " +
             fmt("%.2e", grad));
}

}  // namespace

int main() {
  const auto guarded = [](int id, void (*f)()) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, simple_hybrid);
  guarded(3, em);
  guarded(4, linear_hi2);
  guarded(6, memory_recurrence);
  guarded(5, invariants);
  for (int id = 1; id <= 6; ++id)
    if (!lines.count(id)) report(id, false, "not evaluated");
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}
