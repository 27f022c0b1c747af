#include "hybridsens/model.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include "hybridsens/errors.hpp"

namespace hybridsens {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EvaluationFailure: return "EvaluationFailure";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::SingularIterationMatrix: return "SingularIterationMatrix";
    case ErrorKind::NewtonDivergence: return "NewtonDivergence";
    case ErrorKind::MaxStepsExceeded: return "MaxStepsExceeded";
    case ErrorKind::NoSignChange: return "NoSignChange";
    case ErrorKind::SingularTransition: return "SingularTransition";
    case ErrorKind::GrazingEvent: return "GrazingEvent";
    case ErrorKind::ChatteringLimit: return "ChatteringLimit";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::UnsupportedTransition: return "UnsupportedTransition";
    case ErrorKind::UnknownProblem: return "UnknownProblem";
    case ErrorKind::InvalidOverride: return "InvalidOverride";
    case ErrorKind::InvalidConfiguration: return "InvalidConfiguration";
  }
  return "Unknown";
}

std::string_view to_string(DaeClass c) noexcept {
  switch (c) {
    case DaeClass::FullyImplicit01: return "FullyImplicit01";
    case DaeClass::Hessenberg2: return "Hessenberg2";
    case DaeClass::Index1Memory: return "Index1Memory";
  }
  return "Unknown";
}

const QuadratureSpec& HybridSystemSpec::integrand_for(std::size_t mode) const {
  const auto& m = modes.at(mode);
  return m.integrand ? *m.integrand : integrand;
}

std::size_t HybridSystemSpec::successor(std::size_t from, const Point& before,
                                        const VectorXd& p) const {
  if (next_mode) {
    const std::size_t next = next_mode(from, before, p);
    if (next >= modes.size()) {
      throw HybridError(ErrorKind::InvalidConfiguration, "mode-selection rule returned " +
                                                             std::to_string(next));
    }
    return next;
  }
  return (from + 1) % modes.size();
}

void check_structure(const HybridSystemSpec& spec) {
  auto fail = [&](const std::string& msg) {
    throw HybridError(ErrorKind::InvalidConfiguration, spec.name + ": " + msg);
  };
  if (!(spec.t0 < spec.tf)) fail("t0 must be smaller than tf");
  if (spec.n_y <= 0) fail("at least one differential state is required");
  if (spec.n_z < 0) fail("negative algebraic dimension");
  if (spec.modes.empty()) fail("no modes");
  if (spec.initial_mode >= spec.modes.size()) fail("initial mode out of range");
  if (!spec.integrand.g) fail("missing integrand");
  if (spec.dae_class == DaeClass::Hessenberg2 && spec.n_z == 0) {
    fail("Hessenberg index-2 systems need algebraic variables");
  }
  for (const auto& m : spec.modes) {
    if (!m.dynamics.residual) fail("mode '" + m.name + "' has no residual");
    if (!m.guard.h) fail("mode '" + m.name + "' has no guard");
    if (spec.modes.size() > 1 && !m.exit_map.T) fail("mode '" + m.name + "' has no exit map");
  }
  const auto& ic = spec.initial;
  if (ic.y0.size() != spec.n_y) fail("initial y0 has wrong size");
  if (ic.z0.size() != spec.n_z) fail("initial z0 has wrong size");
  if (ic.yd0.size() != 0 && ic.yd0.size() != spec.n_y) fail("initial yd0 has wrong size");
}

// ---------------------------------------------------------------------------

double fd_step(double x) noexcept {
  static const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  return root_eps * std::max(1.0, std::abs(x));
}

namespace {

template <typename F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const HybridError&) {
    throw;
  } catch (const std::exception& e) {
    throw HybridError(ErrorKind::EvaluationFailure, std::string(what) + ": " + e.what());
  }
}

void require_finite(const VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw HybridError(ErrorKind::EvaluationFailure, std::string(what) + " returned non-finite values");
  }
}

// Central differences of a vector function with respect to the entries of
// one argument vector. `eval` receives the perturbed copy.
template <typename Eval>
MatrixXd fd_block(VectorXd arg, Index rows, Eval&& eval) {
  MatrixXd out(rows, arg.size());
  for (Index j = 0; j < arg.size(); ++j) {
    const double x = arg(j);
    const double h = fd_step(x);
    arg(j) = x + h;
    const VectorXd plus = eval(arg);
    arg(j) = x - h;
    const VectorXd minus = eval(arg);
    arg(j) = x;
    out.col(j) = (plus - minus) / (2.0 * h);
  }
  return out;
}

}  // namespace

VectorXd eval_residual(const ModeDynamics& dyn, const Point& pt, const VectorXd& p) {
  VectorXd r = guarded("residual", [&] { return dyn.residual(pt, p); });
  require_finite(r, "residual");
  return r;
}

JacobianSet fd_jacobians(const ModeDynamics& dyn, const Point& pt, const VectorXd& p) {
  const Index rows = eval_residual(dyn, pt, p).size();
  JacobianSet j;
  Point q = pt;
  j.yd = fd_block(pt.yd, rows, [&](const VectorXd& a) { q.yd = a; auto r = eval_residual(dyn, q, p); q.yd = pt.yd; return r; });
  j.y = fd_block(pt.y, rows, [&](const VectorXd& a) { q.y = a; auto r = eval_residual(dyn, q, p); q.y = pt.y; return r; });
  j.z = fd_block(pt.z, rows, [&](const VectorXd& a) { q.z = a; auto r = eval_residual(dyn, q, p); q.z = pt.z; return r; });
  j.ystar = fd_block(pt.ystar, rows, [&](const VectorXd& a) { q.ystar = a; auto r = eval_residual(dyn, q, p); q.ystar = pt.ystar; return r; });
  j.zstar = fd_block(pt.zstar, rows, [&](const VectorXd& a) { q.zstar = a; auto r = eval_residual(dyn, q, p); q.zstar = pt.zstar; return r; });
  j.p = fd_block(p, rows, [&](const VectorXd& a) { return eval_residual(dyn, pt, a); });
  VectorXd tv(1);
  tv(0) = pt.t;
  j.t = fd_block(tv, rows, [&](const VectorXd& a) { q.t = a(0); auto r = eval_residual(dyn, q, p); q.t = pt.t; return r; }).col(0);
  return j;
}

JacobianSet eval_jacobians(const ModeDynamics& dyn, const Point& pt, const VectorXd& p) {
  if (!dyn.jacobian) return fd_jacobians(dyn, pt, p);
  JacobianSet j = guarded("jacobian", [&] { return dyn.jacobian(pt, p); });
  const Index rows = j.y.rows();
  // Memory blocks are optional in analytic Jacobians.
  if (j.ystar.size() == 0) j.ystar = MatrixXd::Zero(rows, pt.ystar.size());
  if (j.zstar.size() == 0) j.zstar = MatrixXd::Zero(rows, pt.zstar.size());
  if (j.t.size() == 0) j.t = VectorXd::Zero(rows);
  return j;
}

double eval_guard(const TransitionGuard& guard, const Point& pt, const VectorXd& p) {
  const double h = guarded("guard", [&] { return guard.h(pt, p); });
  if (!std::isfinite(h)) throw HybridError(ErrorKind::EvaluationFailure, "guard is not finite");
  return h;
}

GuardPartials eval_guard_partials(const TransitionGuard& guard, const Point& pt,
                                  const VectorXd& p) {
  if (guard.partials) return guarded("guard partials", [&] { return guard.partials(pt, p); });
  GuardPartials gp;
  Point q = pt;
  auto scalar = [](double v) { VectorXd r(1); r(0) = v; return r; };
  gp.yd = fd_block(pt.yd, 1, [&](const VectorXd& a) { q.yd = a; auto r = scalar(eval_guard(guard, q, p)); q.yd = pt.yd; return r; });
  gp.y = fd_block(pt.y, 1, [&](const VectorXd& a) { q.y = a; auto r = scalar(eval_guard(guard, q, p)); q.y = pt.y; return r; });
  gp.z = fd_block(pt.z, 1, [&](const VectorXd& a) { q.z = a; auto r = scalar(eval_guard(guard, q, p)); q.z = pt.z; return r; });
  gp.p = fd_block(p, 1, [&](const VectorXd& a) { return scalar(eval_guard(guard, pt, a)); });
  gp.t = fd_block(scalar(pt.t), 1, [&](const VectorXd& a) { q.t = a(0); auto r = scalar(eval_guard(guard, q, p)); q.t = pt.t; return r; })(0, 0);
  return gp;
}

VectorXd eval_map(const TransitionMap& map, const Point& after, const Point& before,
                  const VectorXd& p) {
  VectorXd r = guarded("transition map", [&] { return map.T(after, before, p); });
  require_finite(r, "transition map");
  if (r.size() != map.rows) {
    throw HybridError(ErrorKind::EvaluationFailure, "transition map returned " +
                                                        std::to_string(r.size()) + " rows, expected " +
                                                        std::to_string(map.rows));
  }
  return r;
}

MapPartials eval_map_partials(const TransitionMap& map, const Point& after, const Point& before,
                              const VectorXd& p) {
  if (map.partials) {
    MapPartials mp = guarded("transition map partials", [&] { return map.partials(after, before, p); });
    const Index rows = map.rows;
    auto fill = [rows](MatrixXd& m, Index cols) { if (m.size() == 0) m = MatrixXd::Zero(rows, cols); };
    fill(mp.yd_after, after.yd.size());
    fill(mp.y_after, after.y.size());
    fill(mp.z_after, after.z.size());
    fill(mp.yd_before, before.yd.size());
    fill(mp.y_before, before.y.size());
    fill(mp.z_before, before.z.size());
    fill(mp.p, p.size());
    if (mp.t.size() == 0) mp.t = VectorXd::Zero(rows);
    return mp;
  }
  const Index rows = map.rows;
  MapPartials mp;
  Point a = after;
  Point b = before;
  mp.yd_after = fd_block(after.yd, rows, [&](const VectorXd& v) { a.yd = v; auto r = eval_map(map, a, b, p); a.yd = after.yd; return r; });
  mp.y_after = fd_block(after.y, rows, [&](const VectorXd& v) { a.y = v; auto r = eval_map(map, a, b, p); a.y = after.y; return r; });
  mp.z_after = fd_block(after.z, rows, [&](const VectorXd& v) { a.z = v; auto r = eval_map(map, a, b, p); a.z = after.z; return r; });
  mp.yd_before = fd_block(before.yd, rows, [&](const VectorXd& v) { b.yd = v; auto r = eval_map(map, a, b, p); b.yd = before.yd; return r; });
  mp.y_before = fd_block(before.y, rows, [&](const VectorXd& v) { b.y = v; auto r = eval_map(map, a, b, p); b.y = before.y; return r; });
  mp.z_before = fd_block(before.z, rows, [&](const VectorXd& v) { b.z = v; auto r = eval_map(map, a, b, p); b.z = before.z; return r; });
  mp.p = fd_block(p, rows, [&](const VectorXd& v) { return eval_map(map, after, before, v); });
  VectorXd tv(1);
  tv(0) = after.t;
  mp.t = fd_block(tv, rows, [&](const VectorXd& v) {
           a.t = v(0);
           b.t = v(0);
           auto r = eval_map(map, a, b, p);
           a.t = after.t;
           b.t = before.t;
           return r;
         }).col(0);
  return mp;
}

double eval_integrand(const QuadratureSpec& q, const Point& pt, const VectorXd& p) {
  const double g = guarded("integrand", [&] { return q.g(pt, p); });
  if (!std::isfinite(g)) throw HybridError(ErrorKind::EvaluationFailure, "integrand is not finite");
  return g;
}

IntegrandPartials eval_integrand_partials(const QuadratureSpec& q, const Point& pt,
                                          const VectorXd& p) {
  if (q.partials) {
    IntegrandPartials ip = guarded("integrand partials", [&] { return q.partials(pt, p); });
    if (ip.y.size() == 0) ip.y = RowVectorXd::Zero(pt.y.size());
    if (ip.z.size() == 0) ip.z = RowVectorXd::Zero(pt.z.size());
    if (ip.p.size() == 0) ip.p = RowVectorXd::Zero(p.size());
    return ip;
  }
  IntegrandPartials ip;
  Point r = pt;
  auto scalar = [](double v) { VectorXd s(1); s(0) = v; return s; };
  ip.y = fd_block(pt.y, 1, [&](const VectorXd& a) { r.y = a; auto v = scalar(eval_integrand(q, r, p)); r.y = pt.y; return v; });
  ip.z = fd_block(pt.z, 1, [&](const VectorXd& a) { r.z = a; auto v = scalar(eval_integrand(q, r, p)); r.z = pt.z; return v; });
  ip.p = fd_block(p, 1, [&](const VectorXd& a) { return scalar(eval_integrand(q, pt, a)); });
  ip.t = fd_block(scalar(pt.t), 1, [&](const VectorXd& a) { r.t = a(0); auto v = scalar(eval_integrand(q, r, p)); r.t = pt.t; return v; })(0, 0);
  return ip;
}

// ---------------------------------------------------------------------------

SplitJacobians split(const JacobianSet& jac, Index n_y) {
  const Index n_z = jac.y.rows() - n_y;
  SplitJacobians s;
  s.f_y = -jac.y.topRows(n_y);
  s.f_z = -jac.z.topRows(n_y);
  s.f_ystar = -jac.ystar.topRows(n_y);
  s.f_zstar = -jac.zstar.topRows(n_y);
  s.f_p = -jac.p.topRows(n_y);
  s.f_t = -jac.t.head(n_y);
  s.k_y = jac.y.bottomRows(n_z);
  s.k_z = jac.z.bottomRows(n_z);
  s.k_ystar = jac.ystar.bottomRows(n_z);
  s.k_zstar = jac.zstar.bottomRows(n_z);
  s.k_p = jac.p.bottomRows(n_z);
  s.k_t = jac.t.tail(n_z);
  return s;
}

VectorXd split_rhs(const ModeDynamics& dyn, const Point& pt, const VectorXd& p, Index n_y) {
  Point q = pt;
  q.yd = VectorXd::Zero(n_y);
  return -eval_residual(dyn, q, p).head(n_y);
}

double smallest_singular_value(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues().minCoeff();
}

namespace {

bool numerically_singular(const MatrixXd& m) {
  if (m.size() == 0) return true;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return !(sv.minCoeff() > 1e-12 * std::max(1.0, sv.maxCoeff()));
}

// C f + k_t for a Hessenberg index-2 point.
VectorXd hidden_constraint(const ModeDynamics& dyn, const Point& pt, const VectorXd& p, Index n_y) {
  const SplitJacobians sj = split(eval_jacobians(dyn, pt, p), n_y);
  return sj.k_y * split_rhs(dyn, pt, p, n_y) + sj.k_t;
}

}  // namespace

HiddenDerivatives compute_hidden_derivatives(const HybridSystemSpec& spec, std::size_t mode,
                                             const Point& pt, const VectorXd& p) {
  const auto& dyn = spec.modes.at(mode).dynamics;
  const JacobianSet jac = eval_jacobians(dyn, pt, p);
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  HiddenDerivatives hd;
  if (spec.dae_class != DaeClass::Hessenberg2) {
    MatrixXd m(ny + nz, ny + nz);
    m << jac.yd, jac.z;
    if (numerically_singular(m)) {
      throw HybridError(ErrorKind::SingularMatrix, "[F_yd | F_z] is singular at t=" + std::to_string(pt.t));
    }
    const VectorXd sol = m.fullPivLu().solve(-(jac.y * pt.yd + jac.t));
    hd.ydd = sol.head(ny);
    hd.zd = sol.tail(nz);
    return hd;
  }
  // Differentiate C f + k_t = 0 along (y', 1): CB z' = -(d/dt of the rest).
  const SplitJacobians sj = split(jac, ny);
  const MatrixXd cb = sj.k_y * sj.f_z;
  if (numerically_singular(cb)) {
    throw HybridError(ErrorKind::SingularMatrix, "CB is singular at t=" + std::to_string(pt.t));
  }
  const double delta = 1e-6 * (1.0 + std::abs(pt.t));
  Point plus = pt;
  Point minus = pt;
  plus.y = pt.y + delta * pt.yd;
  plus.t = pt.t + delta;
  minus.y = pt.y - delta * pt.yd;
  minus.t = pt.t - delta;
  const VectorXd drift =
      (hidden_constraint(dyn, plus, p, ny) - hidden_constraint(dyn, minus, p, ny)) / (2.0 * delta);
  hd.zd = cb.fullPivLu().solve(-drift);
  hd.ydd = sj.f_y * pt.yd + sj.f_z * hd.zd + sj.f_t;
  return hd;
}

double guard_drift(const GuardPartials& gp, const Point& pt, const HiddenDerivatives& hd) {
  double d = gp.t;
  if (gp.yd.size()) d += gp.yd.dot(hd.ydd);
  if (gp.y.size()) d += gp.y.dot(pt.yd);
  if (gp.z.size()) d += gp.z.dot(hd.zd);
  return d;
}

bool ValidationReport::ok() const {
  for (const auto& f : findings) {
    if (!f.ok) return false;
  }
  return true;
}

ValidationReport validate_spec(const HybridSystemSpec& spec, const std::vector<ProbePoint>& probes,
                               const VectorXd& p) {
  check_structure(spec);
  ValidationReport report;
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;

  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& probe = probes[i];
    const auto& mode = spec.modes.at(probe.mode);
    const Point& pt = probe.point;
    const JacobianSet jac = eval_jacobians(mode.dynamics, pt, p);

    auto add = [&](std::string check, const MatrixXd& m, std::string what) {
      Finding f;
      f.probe = i;
      f.mode = probe.mode;
      f.check = std::move(check);
      f.value = smallest_singular_value(m);
      f.ok = !numerically_singular(m);
      f.message = f.ok ? what + " nonsingular" : what + " numerically singular";
      report.findings.push_back(std::move(f));
    };

    bool regular = true;
    switch (spec.dae_class) {
      case DaeClass::FullyImplicit01: {
        MatrixXd m(ny + nz, ny + nz);
        m << jac.yd, jac.z;
        add("rank[F_yd|F_z]", m, "[F_yd | F_z]");
        regular = report.findings.back().ok;
        break;
      }
      case DaeClass::Hessenberg2: {
        const SplitJacobians sj = split(jac, ny);
        add("CB", sj.k_y * sj.f_z, "CB");
        regular = report.findings.back().ok;
        break;
      }
      case DaeClass::Index1Memory: {
        const SplitJacobians sj = split(jac, ny);
        add("k_z", sj.k_z, "k_z");
        regular = report.findings.back().ok;
        break;
      }
    }

    const GuardPartials gp = eval_guard_partials(mode.guard, pt, p);
    if (spec.dae_class != DaeClass::FullyImplicit01) {
      const bool uses_yd = gp.yd.size() && gp.yd.cwiseAbs().maxCoeff() > 0.0;
      const bool uses_z = spec.dae_class == DaeClass::Index1Memory && gp.z.size() &&
                          gp.z.cwiseAbs().maxCoeff() > 0.0;
      if (uses_yd || uses_z) {
        Finding f;
        f.probe = i;
        f.mode = probe.mode;
        f.check = "guard-arguments";
        f.ok = false;
        f.message = uses_yd ? "guard depends on y' (not supported for this class)"
                            : "guard depends on z (not supported for this class)";
        report.findings.push_back(std::move(f));
      }
    }
    if (regular) {
      const HiddenDerivatives hd = compute_hidden_derivatives(spec, probe.mode, pt, p);
      Finding f;
      f.probe = i;
      f.mode = probe.mode;
      f.check = "guard-drift";
      f.value = std::abs(guard_drift(gp, pt, hd));
      f.ok = f.value > 1e-8;
      f.message = f.ok ? "guard drift bounded away from zero" : "guard drift vanishes (grazing)";
      report.findings.push_back(std::move(f));
    }

    // Transition solvability, evaluated with the probe as both sides of a
    // prospective switch into the successor mode.
    if (spec.modes.size() > 1 && mode.exit_map.T) {
      const std::size_t next = spec.successor(probe.mode, pt, p);
      Point after = pt;
      const JacobianSet jn = eval_jacobians(spec.modes[next].dynamics, after, p);
      const MapPartials mp = eval_map_partials(mode.exit_map, after, pt, p);
      switch (spec.dae_class) {
        case DaeClass::FullyImplicit01: {
          MatrixXd m(mp.y_after.rows() + ny + nz, 2 * ny + nz);
          m << mp.yd_after, mp.y_after, mp.z_after, jn.yd, jn.y, jn.z;
          add("transition-matrix", m, "[T; F] transition matrix");
          break;
        }
        case DaeClass::Hessenberg2: {
          const SplitJacobians sj = split(jn, ny);
          MatrixXd m(mp.y_after.rows() + nz, ny);
          m << mp.y_after, sj.k_y;
          add("transition-matrix", m, "[T_y+; C]");
          break;
        }
        case DaeClass::Index1Memory: {
          const SplitJacobians sj = split(jn, ny);
          MatrixXd m(mp.y_after.rows() + nz, ny + nz);
          m << mp.y_after, mp.z_after, sj.k_y + sj.k_ystar, sj.k_z + sj.k_zstar;
          add("transition-matrix", m, "[T_y+ T_z+; k_y k_z]");
          break;
        }
      }
    }
  }
  return report;
}

}  // namespace hybridsens
