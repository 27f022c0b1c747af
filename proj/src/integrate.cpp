#include "hybridsens/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hybridsens/errors.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/hi2.hpp"
#include "linalg.hpp"

namespace hybridsens {

// ---------------------------------------------------------------------------
// Dense output

namespace {

struct Hermite {
  double h00, h10, h01, h11;
};

Hermite hermite(double th) {
  const double t2 = th * th;
  const double t3 = t2 * th;
  return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + th, -2 * t3 + 3 * t2, t3 - t2};
}

Hermite hermite_deriv(double th) {
  const double t2 = th * th;
  return {6 * t2 - 6 * th, 3 * t2 - 4 * th + 1, -6 * t2 + 6 * th, 3 * t2 - 2 * th};
}

}  // namespace

VectorXd StepRecord::y(double t) const {
  if (t == t_left) return y_left;
  if (t == t_right) return y_right;
  const double H = t_right - t_left;
  const Hermite c = hermite((t - t_left) / H);
  return c.h00 * y_left + c.h10 * H * yd_left + c.h01 * y_right + c.h11 * H * yd_right;
}

VectorXd StepRecord::yd(double t) const {
  if (t == t_left) return yd_left;
  if (t == t_right) return yd_right;
  const double H = t_right - t_left;
  const Hermite c = hermite_deriv((t - t_left) / H);
  return (c.h00 * y_left + c.h01 * y_right) / H + c.h10 * yd_left + c.h11 * yd_right;
}

VectorXd StepRecord::z(double t) const {
  if (t == t_left) return z_left;
  if (t == t_right) return z_right;
  const double th = (t - t_left) / (t_right - t_left);
  return (1.0 - th) * z_left + th * z_right;
}

MatrixXd StepRecord::s(double t) const {
  if (t == t_left) return s_left;
  if (t == t_right) return s_right;
  const double H = t_right - t_left;
  const Hermite c = hermite((t - t_left) / H);
  return c.h00 * s_left + c.h10 * H * sd_left + c.h01 * s_right + c.h11 * H * sd_right;
}

MatrixXd StepRecord::w(double t) const {
  if (t == t_left) return w_left;
  if (t == t_right) return w_right;
  const double th = (t - t_left) / (t_right - t_left);
  return (1.0 - th) * w_left + th * w_right;
}

const StepRecord& ModeTrace::step_at(double t) const {
  if (steps.empty()) throw HybridError(ErrorKind::InvalidConfiguration, "empty mode trace");
  auto it = std::lower_bound(steps.begin(), steps.end(), t,
                             [](const StepRecord& s, double v) { return s.t_right < v; });
  if (it == steps.end()) return steps.back();
  return *it;
}

Point ModeTrace::at(double t) const {
  t = std::clamp(t, t_start, t_end);
  const StepRecord& st = step_at(t);
  const double tc = std::clamp(t, st.t_left, st.t_right);
  Point pt;
  pt.t = tc;
  pt.y = st.y(tc);
  pt.yd = st.yd(tc);
  pt.z = st.z(tc);
  pt.ystar = ystar;
  pt.zstar = zstar;
  return pt;
}

// ---------------------------------------------------------------------------
// Mode DAE

ModeSystem::ModeSystem(const HybridSystemSpec& spec, std::size_t mode, const ModeContext& ctx)
    : spec_(spec), mode_(mode), ctx_(ctx) {}

Point ModeSystem::point(double t, const VectorXd& xdot, const VectorXd& x,
                        const VectorXd& xa) const {
  Point pt;
  pt.t = t;
  pt.yd = xdot;
  pt.y = x;
  pt.z = xa;
  pt.ystar = ctx_.ystar;
  pt.zstar = ctx_.zstar;
  return pt;
}

VectorXd ModeSystem::residual(double t, const VectorXd& xdot, const VectorXd& x,
                              const VectorXd& xa) const {
  return eval_residual(spec_.modes[mode_].dynamics, point(t, xdot, x, xa), ctx_.p);
}

Linearization ModeSystem::linearize(double t, const VectorXd& xdot, const VectorXd& x,
                                    const VectorXd& xa, bool with_forcing) const {
  JacobianSet j = eval_jacobians(spec_.modes[mode_].dynamics, point(t, xdot, x, xa), ctx_.p);
  Linearization lin;
  lin.xdot = std::move(j.yd);
  lin.x = std::move(j.y);
  lin.xa = std::move(j.z);
  if (with_forcing && ctx_.sensitivities) {
    lin.forcing = j.p;
    if (spec_.dae_class == DaeClass::Index1Memory) {
      lin.forcing += j.ystar * ctx_.sstar + j.zstar * ctx_.wstar;
    }
  }
  return lin;
}

Index ModeSystem::tangent_columns() const { return ctx_.sensitivities ? spec_.n_p() : 0; }

Index ModeSystem::quadrature_size() const { return ctx_.sensitivities ? 1 + spec_.n_p() : 1; }

VectorXd ModeSystem::quadrature(const DaeState& st) const {
  const Point pt = point(st);
  const QuadratureSpec& q = spec_.integrand_for(mode_);
  VectorXd out(quadrature_size());
  out(0) = eval_integrand(q, pt, ctx_.p);
  if (ctx_.sensitivities) {
    const IntegrandPartials ip = eval_integrand_partials(q, pt, ctx_.p);
    RowVectorXd d = ip.p;
    if (ip.y.size()) d += ip.y * st.s;
    if (ip.z.size() && st.w.size()) d += ip.z * st.w;
    out.tail(spec_.n_p()) = d.transpose();
  }
  return out;
}

double ModeSystem::guard(const DaeState& s) const {
  return eval_guard(spec_.modes[mode_].guard, point(s), ctx_.p);
}

StepAttempt step(const HybridSystemSpec& spec, std::size_t mode, const ModeContext& ctx,
                 const DaeState& state, double dt, const Tolerances& tol) {
  const ModeSystem sys(spec, mode, ctx);
  return attempt_step(sys, state, dt, tol);
}

// ---------------------------------------------------------------------------
// Event location

double event_tolerance_h(double h_scale) { return 1e-10 * (1.0 + std::abs(h_scale)); }

double refine_root(const std::function<double(double)>& h, double a, double b, double ha,
                   double hb, double eps_h, double eps_t) {
  if (std::abs(hb) <= eps_h && (b - a) <= eps_t * std::max(1.0, std::abs(b))) return b;
  if (!(ha * hb < 0.0) && !(std::abs(hb) <= eps_h)) {
    throw HybridError(ErrorKind::NoSignChange, "guard has no sign change on [" +
                                                   std::to_string(a) + ", " + std::to_string(b) +
                                                   "]");
  }
  const double ref = ha > 0.0 ? 1.0 : -1.0;
  double fa = ha, fb = hb;  // Illinois-scaled values
  double ta = ha, tb = hb;  // true values
  int side = 0;
  int slow = 0;
  for (int it = 0; it < 400; ++it) {
    const double width = b - a;
    const double best = std::min(std::abs(ta), std::abs(tb));
    if (width <= eps_t * std::max(1.0, std::abs(b)) && best <= eps_h) break;
    if (width <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b))) break;
    double t = (fb != fa) ? b - fb * (b - a) / (fb - fa) : 0.5 * (a + b);
    if (!(t > a && t < b) || slow >= 3) {
      t = 0.5 * (a + b);
      slow = 0;
    }
    // Keep secant points off the endpoints so the bracket also shrinks.
    const double margin = 0.25 * eps_t * std::max(1.0, std::abs(t));
    if (t - a < margin) t = std::min(a + margin, 0.5 * (a + b));
    if (b - t < margin) t = std::max(b - margin, 0.5 * (a + b));
    const double ft = h(t);
    const double old_width = width;
    if (ft * ref > 0.0) {
      a = t;
      fa = ta = ft;
      if (side == -1) fb *= 0.5;
      side = -1;
    } else {
      b = t;
      fb = tb = ft;
      if (side == +1) fa *= 0.5;
      side = +1;
    }
    slow = (b - a) > 0.5 * old_width ? slow + 1 : 0;
  }
  return std::abs(ta) < std::abs(tb) ? a : b;
}

namespace {

// Leftmost sub-interval of [a, b] on which the sampled guard leaves the
// reference sign. Returns false if no sample does.
bool first_crossing(const std::function<double(double)>& h, double a, double b, double ref,
                    double eps_h, double& lo, double& hi, double& h_lo, double& h_hi,
                    bool& multiple, int samples = 16) {
  double prev_t = a;
  double prev_h = h(a);
  bool found = false;
  int changes = 0;
  double last_sign = ref;
  for (int k = 1; k <= samples; ++k) {
    const double t = (k == samples) ? b : a + (b - a) * k / samples;
    const double v = h(t);
    const bool crossed = v * ref < 0.0 || std::abs(v) <= eps_h;
    const double sign = crossed ? -ref : ref;
    if (sign != last_sign) ++changes;
    last_sign = sign;
    if (crossed && !found) {
      found = true;
      lo = prev_t;
      hi = t;
      h_lo = prev_h;
      h_hi = v;
    }
    prev_t = t;
    prev_h = v;
  }
  multiple = changes > 1;
  return found;
}

DaeState state_from_point(const Point& pt) {
  DaeState s;
  s.t = pt.t;
  s.x = pt.y;
  s.xdot = pt.yd;
  s.xa = pt.z;
  return s;
}

StepRecord make_record(const DaeState& a, const DaeState& b) {
  StepRecord r;
  r.t_left = a.t;
  r.t_right = b.t;
  r.y_left = a.x;
  r.yd_left = a.xdot;
  r.z_left = a.xa;
  r.y_right = b.x;
  r.yd_right = b.xdot;
  r.z_right = b.xa;
  r.s_left = a.s;
  r.sd_left = a.sdot;
  r.w_left = a.w;
  r.s_right = b.s;
  r.sd_right = b.sdot;
  r.w_right = b.w;
  return r;
}

}  // namespace

EventLocation locate_event(const StepRecord& st, const HybridSystemSpec& spec, std::size_t mode,
                           const ModeContext& ctx, double eps_h, double eps_t) {
  const ModeSystem sys(spec, mode, ctx);
  auto h = [&](double t) {
    return eval_guard(spec.modes[mode].guard, sys.point(t, st.yd(t), st.y(t), st.z(t)), ctx.p);
  };
  const double h0 = h(st.t_left);
  const double ref = h0 >= 0.0 ? 1.0 : -1.0;
  double lo = 0, hi = 0, hlo = 0, hhi = 0;
  bool multiple = false;
  if (!first_crossing(h, st.t_left, st.t_right, ref, eps_h, lo, hi, hlo, hhi, multiple)) {
    throw HybridError(ErrorKind::NoSignChange, "guard keeps its sign on the step");
  }
  EventLocation loc;
  loc.multiple_crossings = multiple;
  loc.t = refine_root(h, lo, hi, hlo, hhi, eps_h, eps_t);
  return loc;
}

// ---------------------------------------------------------------------------
// Mode integration

ModeRun integrate_mode(const HybridSystemSpec& spec, std::size_t mode, const ModeContext& ctx,
                       const DaeState& start, double t_stop, const Tolerances& tol, double& h,
                       std::vector<std::string>* warnings, std::size_t max_steps,
                       std::size_t* accepted, std::size_t* rejected) {
  const ModeSystem sys(spec, mode, ctx);
  ModeRun run;
  run.trace.mode = mode;
  run.trace.t_start = start.t;
  run.trace.ystar = ctx.ystar;
  run.trace.zstar = ctx.zstar;

  // Index-2 components are not controlled by the stepper; put every accepted
  // state back on the hidden constraint.
  auto settle = [&](DaeState& st) {
    if (spec.dae_class != DaeClass::Hessenberg2) return;
    Point pt = sys.point(st);
    hi2_project(spec, mode, ctx.p, pt, st.s, st.sdot, st.w);
    st.xa = pt.z;
    st.xdot = pt.yd;
  };

  DaeState cur = start;
  double h_cur = sys.guard(cur);
  bool armed = std::abs(h_cur) > event_tolerance_h(h_cur);
  double ref = h_cur >= 0.0 ? 1.0 : -1.0;
  if (!(h > 0.0)) h = 1e-6 * std::max(1.0, std::abs(t_stop - start.t));
  std::size_t attempts = 0;

  while (cur.t < t_stop) {
    const double remaining = t_stop - cur.t;
    const bool last = h >= remaining * (1.0 - 1e-12);
    const double hh = last ? remaining : h;
    const double h_min = 1e-14 * std::max(1.0, std::abs(cur.t));
    if (++attempts > max_steps) {
      throw HybridError(ErrorKind::MaxStepsExceeded,
                        "step limit reached at t=" + std::to_string(cur.t));
    }
    StepAttempt at = attempt_step(sys, cur, hh, tol);
    if (!at.converged || at.error > 1.0) {
      if (rejected) ++*rejected;
      h = at.converged ? hh * std::max(0.2, step_factor(at.error)) : hh * 0.25;
      if (h < h_min) {
        throw HybridError(at.converged ? ErrorKind::MaxStepsExceeded : ErrorKind::NewtonDivergence,
                          "step size underflow at t=" + std::to_string(cur.t));
      }
      continue;
    }
    if (accepted) ++*accepted;
    if (last) at.end.t = t_stop;
    settle(at.end);
    const double h_next = hh * step_factor(at.error);
    const double hv = sys.guard(at.end);
    const double eps_h = event_tolerance_h(h_cur);

    if (!armed) {
      if (std::abs(hv) > eps_h) {
        armed = true;
        ref = hv >= 0.0 ? 1.0 : -1.0;
      }
    } else if (hv * ref < 0.0 || std::abs(hv) <= eps_h) {
      // Guard fired inside (cur, at.end]. Land exactly on the crossing by
      // re-stepping from cur.
      double t_event = at.end.t;
      DaeState landed = at.end;
      if (hv * ref < 0.0) {
        auto land = [&](double t) -> StepAttempt {
          StepAttempt la = attempt_step(sys, cur, t - cur.t, tol);
          if (!la.converged) {
            throw HybridError(ErrorKind::NewtonDivergence,
                              "landing step failed at t=" + std::to_string(t));
          }
          return la;
        };
        auto phi = [&](double t) { return t == at.end.t ? hv : sys.guard(land(t).end); };
        StepRecord rec = make_record(cur, at.end);
        auto dense = [&](double t) {
          return eval_guard(spec.modes[mode].guard, sys.point(t, rec.yd(t), rec.y(t), rec.z(t)),
                            ctx.p);
        };
        double lo = cur.t, hi = at.end.t, hlo = h_cur, hhi = hv;
        double dlo = 0, dhi = 0, dhlo = 0, dhhi = 0;
        bool multiple = false;
        if (first_crossing(dense, cur.t, at.end.t, ref, eps_h, dlo, dhi, dhlo, dhhi, multiple)) {
          const double plo = dlo == cur.t ? h_cur : phi(dlo);
          const double phi_hi = phi(dhi);
          if (plo * ref > 0.0 && (phi_hi * ref < 0.0 || std::abs(phi_hi) <= eps_h)) {
            lo = dlo;
            hi = dhi;
            hlo = plo;
            hhi = phi_hi;
          }
        }
        if (multiple && warnings) {
          warnings->push_back("MultipleCrossings: guard of mode " + spec.modes[mode].name +
                              " changes sign more than once on [" + std::to_string(cur.t) + ", " +
                              std::to_string(at.end.t) + "]; leftmost crossing used");
        }
        t_event = refine_root(phi, lo, hi, hlo, hhi, eps_h, kEventTolT);
        if (t_event != at.end.t) {
          landed = land(t_event).end;
          settle(landed);
        }
      }
      if (t_event > cur.t) run.trace.steps.push_back(make_record(cur, landed));
      cur = std::move(landed);
      run.event = true;
      h = std::max(h_next, 1e-6 * std::max(1.0, std::abs(t_stop - start.t)));
      break;
    }
    run.trace.steps.push_back(make_record(cur, at.end));
    cur = std::move(at.end);
    h_cur = hv;
    h = h_next;
  }
  run.trace.t_end = cur.t;
  run.trace.ends_in_transition = run.event;
  run.final_state = std::move(cur);
  return run;
}

// ---------------------------------------------------------------------------
// Consistent initialization

double consistency_residual(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                            const VectorXd& p) {
  double r = eval_residual(spec.modes[mode].dynamics, pt, p).cwiseAbs().maxCoeff();
  if (spec.dae_class == DaeClass::Hessenberg2) {
    const VectorXd hid = hi2_hidden_residual(spec, mode, pt, p);
    if (hid.size()) r = std::max(r, hid.cwiseAbs().maxCoeff());
  }
  return r;
}

namespace {

// Solves F(y', y, z) = 0 for (y', z) with y fixed (index-1 consistency).
Point complete_index1(const HybridSystemSpec& spec, std::size_t mode, Point pt,
                      const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const auto& dyn = spec.modes[mode].dynamics;
  VectorXd x0(ny + nz);
  x0 << pt.yd, pt.z;
  auto unpack = [&](const VectorXd& x) {
    Point q = pt;
    q.yd = x.head(ny);
    q.z = x.tail(nz);
    return q;
  };
  const VectorXd x = detail::newton_solve(
      [&](const VectorXd& v) { return eval_residual(dyn, unpack(v), p); },
      [&](const VectorXd& v) {
        const JacobianSet j = eval_jacobians(dyn, unpack(v), p);
        MatrixXd m(ny + nz, ny + nz);
        m << j.yd, j.z;
        return m;
      },
      x0, ErrorKind::SingularMatrix, "initial consistency [F_yd | F_z]");
  return unpack(x);
}

Point initial_class01(const HybridSystemSpec& spec, const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const std::size_t mode = spec.initial_mode;
  const auto& ic = spec.initial;
  Point pt;
  pt.t = spec.t0;
  pt.y = ic.y0;
  pt.z = ic.z0;
  pt.yd = ic.yd0.size() ? ic.yd0 : VectorXd::Zero(ny);
  if (!ic.map) return complete_index1(spec, mode, pt, p);

  const auto& dyn = spec.modes[mode].dynamics;
  const TransitionMap& map = *ic.map;
  const Point empty{spec.t0, {}, {}, {}, {}, {}};
  auto unpack = [&](const VectorXd& x) {
    Point q = pt;
    q.yd = x.head(ny);
    q.y = x.segment(ny, ny);
    q.z = x.tail(nz);
    return q;
  };
  VectorXd x0(2 * ny + nz);
  x0 << pt.yd, pt.y, pt.z;
  const VectorXd x = detail::newton_solve(
      [&](const VectorXd& v) {
        const Point q = unpack(v);
        VectorXd r(map.rows + ny + nz);
        r << eval_map(map, q, empty, p), eval_residual(dyn, q, p);
        return r;
      },
      [&](const VectorXd& v) {
        const Point q = unpack(v);
        const MapPartials mp = eval_map_partials(map, q, empty, p);
        const JacobianSet j = eval_jacobians(dyn, q, p);
        MatrixXd m(map.rows + ny + nz, 2 * ny + nz);
        m << mp.yd_after, mp.y_after, mp.z_after, j.yd, j.y, j.z;
        return m;
      },
      x0, ErrorKind::SingularMatrix, "initial condition [T0; F]");
  return unpack(x);
}

Point initial_memory(const HybridSystemSpec& spec, const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const std::size_t mode = spec.initial_mode;
  const auto& dyn = spec.modes[mode].dynamics;
  Point pt;
  pt.t = spec.t0;
  pt.y = spec.initial.y0;
  pt.z = spec.initial.z0;
  pt.ystar = spec.initial.y0;
  pt.zstar = spec.initial.z0;
  pt.yd = VectorXd::Zero(ny);
  // Algebraic rows with the memory frozen at the given initial values.
  auto with_z = [&](const VectorXd& z) {
    Point q = pt;
    q.z = z;
    return q;
  };
  pt.z = detail::newton_solve(
      [&](const VectorXd& z) { return VectorXd(eval_residual(dyn, with_z(z), p).tail(nz)); },
      [&](const VectorXd& z) {
        return MatrixXd(eval_jacobians(dyn, with_z(z), p).z.bottomRows(nz));
      },
      pt.z, ErrorKind::SingularMatrix, "initial algebraic equations k_z");
  pt.yd = split_rhs(dyn, pt, p, ny);
  return pt;
}

Point transition_class01(const HybridSystemSpec& spec, std::size_t mode_before,
                         std::size_t mode_after, const Point& before, const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const TransitionMap& map = spec.modes[mode_before].exit_map;
  const auto& dyn = spec.modes[mode_after].dynamics;
  auto unpack = [&](const VectorXd& x) {
    Point q;
    q.t = before.t;
    q.yd = x.head(ny);
    q.y = x.segment(ny, ny);
    q.z = x.tail(nz);
    return q;
  };
  VectorXd x0(2 * ny + nz);
  x0 << before.yd, before.y, before.z;
  const VectorXd x = detail::newton_solve(
      [&](const VectorXd& v) {
        const Point q = unpack(v);
        VectorXd r(map.rows + ny + nz);
        r << eval_map(map, q, before, p), eval_residual(dyn, q, p);
        return r;
      },
      [&](const VectorXd& v) {
        const Point q = unpack(v);
        const MapPartials mp = eval_map_partials(map, q, before, p);
        const JacobianSet j = eval_jacobians(dyn, q, p);
        MatrixXd m(map.rows + ny + nz, 2 * ny + nz);
        m << mp.yd_after, mp.y_after, mp.z_after, j.yd, j.y, j.z;
        return m;
      },
      x0, ErrorKind::SingularTransition, "transition system [T; F]");
  return unpack(x);
}

Point transition_memory(const HybridSystemSpec& spec, std::size_t mode_before,
                        std::size_t mode_after, const Point& before, const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const TransitionMap& map = spec.modes[mode_before].exit_map;
  const auto& dyn = spec.modes[mode_after].dynamics;
  // Memory of the new mode is the post-transition state itself.
  auto unpack = [&](const VectorXd& x) {
    Point q;
    q.t = before.t;
    q.y = x.head(ny);
    q.z = x.tail(nz);
    q.yd = before.yd;
    q.ystar = q.y;
    q.zstar = q.z;
    return q;
  };
  VectorXd x0(ny + nz);
  x0 << before.y, before.z;
  const VectorXd x = detail::newton_solve(
      [&](const VectorXd& v) {
        const Point q = unpack(v);
        VectorXd r(map.rows + nz);
        r << eval_map(map, q, before, p), eval_residual(dyn, q, p).tail(nz);
        return r;
      },
      [&](const VectorXd& v) {
        const Point q = unpack(v);
        const MapPartials mp = eval_map_partials(map, q, before, p);
        const SplitJacobians sj = split(eval_jacobians(dyn, q, p), ny);
        MatrixXd m(map.rows + nz, ny + nz);
        m << mp.y_after, mp.z_after, sj.k_y + sj.k_ystar, sj.k_z + sj.k_zstar;
        return m;
      },
      x0, ErrorKind::SingularTransition, "transition system [T; k]");
  Point after = unpack(x);
  after.yd = split_rhs(dyn, after, p, ny);
  return after;
}

}  // namespace

Point consistent_initial_state(const HybridSystemSpec& spec, const VectorXd& p) {
  check_structure(spec);
  switch (spec.dae_class) {
    case DaeClass::FullyImplicit01: return initial_class01(spec, p);
    case DaeClass::Hessenberg2: return hi2_initialize(spec, p);
    case DaeClass::Index1Memory: return initial_memory(spec, p);
  }
  return {};
}

Point consistent_init(const HybridSystemSpec& spec, std::size_t mode_before,
                      std::size_t mode_after, const Point& before, const VectorXd& p) {
  switch (spec.dae_class) {
    case DaeClass::FullyImplicit01:
      return transition_class01(spec, mode_before, mode_after, before, p);
    case DaeClass::Hessenberg2: return hi2_transition(spec, mode_before, mode_after, before, p);
    case DaeClass::Index1Memory:
      return transition_memory(spec, mode_before, mode_after, before, p);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Hybrid forward run

ForwardResult simulate(const HybridSystemSpec& spec, const VectorXd& p,
                       const ForwardOptions& options) {
  check_structure(spec);
  if (p.size() != spec.n_p()) {
    throw HybridError(ErrorKind::InvalidConfiguration, "parameter vector has wrong size");
  }
  const bool sens = options.sensitivities;
  const Index np = spec.n_p();
  ForwardResult res;
  res.p = p;
  res.tol = options.tol;
  res.initial_mode = spec.initial_mode;
  res.initial = consistent_initial_state(spec, p);
  res.max_consistency_residual = consistency_residual(spec, spec.initial_mode, res.initial, p);

  ModeContext ctx;
  ctx.p = p;
  ctx.sensitivities = sens;
  ctx.ystar = res.initial.ystar;
  ctx.zstar = res.initial.zstar;

  DaeState state = state_from_point(res.initial);
  state.q = VectorXd::Zero(sens ? 1 + np : 1);
  if (sens) {
    const SensitivityState s0 = initial_sensitivities(spec, res.initial, p);
    res.s0 = s0.s;
    res.sd0 = s0.sd;
    res.w0 = s0.w;
    state.s = s0.s;
    state.sdot = s0.sd;
    state.w = s0.w;
    if (spec.dae_class == DaeClass::Index1Memory) {
      ctx.sstar = s0.s;
      ctx.wstar = s0.w;
    }
  }

  std::size_t mode = spec.initial_mode;
  double h = 1e-6 * (spec.tf - spec.t0);
  for (;;) {
    ModeRun run = integrate_mode(spec, mode, ctx, state, spec.tf, options.tol, h, &res.warnings,
                                 options.max_steps, &res.accepted_steps, &res.rejected_steps);
    state = std::move(run.final_state);
    if (!options.store_steps) run.trace.steps.clear();
    res.traces.push_back(std::move(run.trace));
    if (!run.event) break;

    if (res.transitions.size() >= options.max_transitions) {
      throw HybridError(ErrorKind::ChatteringLimit,
                        std::to_string(options.max_transitions) + " transitions before t=" +
                            std::to_string(state.t));
    }
    TransitionRecord rec;
    rec.index = res.transitions.size() + 1;
    rec.t = state.t;
    rec.mode_before = mode;
    const ModeSystem sys(spec, mode, ctx);
    rec.before = sys.point(state);
    rec.guard_value = eval_guard(spec.modes[mode].guard, rec.before, p);
    rec.mode_after = spec.successor(mode, rec.before, p);
    {
      const GuardPartials gp = eval_guard_partials(spec.modes[mode].guard, rec.before, p);
      const HiddenDerivatives hd = compute_hidden_derivatives(spec, mode, rec.before, p);
      rec.drift = guard_drift(gp, rec.before, hd);
    }
    rec.after = consistent_init(spec, mode, rec.mode_after, rec.before, p);
    if (spec.dae_class != DaeClass::Index1Memory) {
      rec.after.ystar.resize(0);
      rec.after.zstar.resize(0);
    }
    rec.consistency_residual = consistency_residual(spec, rec.mode_after, rec.after, p);
    res.max_consistency_residual = std::max(res.max_consistency_residual, rec.consistency_residual);

    DaeState next = state_from_point(rec.after);
    next.q = state.q;
    if (sens) {
      SensitivityState before{state.s, state.sdot, state.w};
      const JumpResult jr = fsa_jump(spec, rec, p, before, true);
      SensitivityJump sj;
      sj.tau = jr.tau;
      sj.s_before = before.s;
      sj.sd_before = before.sd;
      sj.w_before = before.w;
      sj.s_after = jr.after.s;
      sj.sd_after = jr.after.sd;
      sj.w_after = jr.after.w;
      res.jumps.push_back(sj);
      // Leibniz boundary terms (g- - g+) tau.
      const double gm = eval_integrand(spec.integrand_for(mode), rec.before, p);
      const double gp_ = eval_integrand(spec.integrand_for(rec.mode_after), rec.after, p);
      next.q.tail(np) += ((gm - gp_) * jr.tau).transpose();
      next.s = jr.after.s;
      next.sdot = jr.after.sd;
      next.w = jr.after.w;
      if (spec.dae_class == DaeClass::Index1Memory) {
        ctx.sstar = jr.after.s;
        ctx.wstar = jr.after.w;
      }
    }
    if (spec.dae_class == DaeClass::Index1Memory) {
      ctx.ystar = rec.after.ystar;
      ctx.zstar = rec.after.zstar;
    }
    res.transitions.push_back(std::move(rec));
    mode = res.transitions.back().mode_after;
    state = std::move(next);
  }
  res.G = state.q(0);
  if (sens) res.dGdp = state.q.tail(np).transpose();
  return res;
}

}  // namespace hybridsens
