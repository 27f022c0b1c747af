#include "hybridsens/asa.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "hybridsens/errors.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/hi2.hpp"
#include "linalg.hpp"

namespace hybridsens {

namespace {

struct Coefficients {
  double t = 0.0;
  bool valid = false;
  Point pt;
  JacobianSet j;
  SplitJacobians sj;
  IntegrandPartials ip;
};

// Adjoint DAE of one mode, linear in the unknowns, with coefficients taken
// from the dense forward trace.
//   class 01:  x = Lambda (N_y), xa = lambda (N_y + N_z)
//   split:     x = lambda (N_y),  xa = mu (N_z)
// Quadratures: K (N_p), and for Index1Memory also I (N_y) and J (N_z).
class AdjointSystem final : public DaeSystem {
 public:
  AdjointSystem(const HybridSystemSpec& spec, const ModeTrace& trace, const VectorXd& p)
      : spec_(spec), trace_(trace), p_(p), split_(spec.dae_class != DaeClass::FullyImplicit01) {}

  Index differential_size() const override { return spec_.n_y; }
  Index algebraic_size() const override { return split_ ? spec_.n_z : spec_.n_x(); }

  VectorXd residual(double t, const VectorXd& xdot, const VectorXd& x,
                    const VectorXd& xa) const override {
    const Coefficients& c = at(t);
    const Index ny = spec_.n_y;
    if (!split_) {
      VectorXd r(2 * ny + spec_.n_z);
      r.head(ny) = xdot - c.j.y.transpose() * xa - c.ip.y.transpose();
      r.segment(ny, ny) = c.j.yd.transpose() * xa - x;
      r.tail(spec_.n_z) = c.j.z.transpose() * xa + c.ip.z.transpose();
      return r;
    }
    VectorXd r(ny + spec_.n_z);
    r.head(ny) = xdot + c.sj.f_y.transpose() * x + c.sj.k_y.transpose() * xa + c.ip.y.transpose();
    r.tail(spec_.n_z) =
        c.sj.f_z.transpose() * x + c.sj.k_z.transpose() * xa + c.ip.z.transpose();
    return r;
  }

  Linearization linearize(double t, const VectorXd&, const VectorXd&, const VectorXd&,
                          bool) const override {
    const Coefficients& c = at(t);
    const Index ny = spec_.n_y;
    const Index nz = spec_.n_z;
    Linearization l;
    if (!split_) {
      const Index rows = 2 * ny + nz;
      l.xdot = MatrixXd::Zero(rows, ny);
      l.xdot.topRows(ny).setIdentity();
      l.x = MatrixXd::Zero(rows, ny);
      l.x.middleRows(ny, ny) = -MatrixXd::Identity(ny, ny);
      l.xa.resize(rows, ny + nz);
      l.xa << -c.j.y.transpose(), c.j.yd.transpose(), c.j.z.transpose();
      return l;
    }
    l.xdot = MatrixXd::Zero(ny + nz, ny);
    l.xdot.topRows(ny).setIdentity();
    l.x.resize(ny + nz, ny);
    l.x << c.sj.f_y.transpose(), c.sj.f_z.transpose();
    l.xa.resize(ny + nz, nz);
    l.xa << c.sj.k_y.transpose(), c.sj.k_z.transpose();
    return l;
  }

  Index quadrature_size() const override {
    Index n = spec_.n_p();
    if (spec_.dae_class == DaeClass::Index1Memory) n += spec_.n_y + spec_.n_z;
    return n;
  }

  VectorXd quadrature(const DaeState& st) const override {
    const Coefficients& c = at(st.t);
    const Index np = spec_.n_p();
    VectorXd q(quadrature_size());
    if (!split_) {
      q.head(np) = c.ip.p.transpose() + c.j.p.transpose() * st.xa;
      return q;
    }
    q.head(np) =
        c.ip.p.transpose() + c.sj.f_p.transpose() * st.x + c.sj.k_p.transpose() * st.xa;
    if (spec_.dae_class == DaeClass::Index1Memory) {
      q.segment(np, spec_.n_y) =
          c.sj.f_ystar.transpose() * st.x + c.sj.k_ystar.transpose() * st.xa;
      q.tail(spec_.n_z) = c.sj.f_zstar.transpose() * st.x + c.sj.k_zstar.transpose() * st.xa;
    }
    return q;
  }

  double algebraic_residual(const DaeState& st) const {
    const VectorXd r = residual(st.t, st.xdot, st.x, st.xa);
    const Index nz = spec_.n_z;
    if (nz == 0) return 0.0;
    return r.tail(nz).cwiseAbs().maxCoeff();
  }

 private:
  const Coefficients& at(double t) const {
    for (const auto& c : cache_) {
      if (c.valid && c.t == t) return c;
    }
    Coefficients& c = cache_[next_];
    next_ = (next_ + 1) % cache_.size();
    c.t = t;
    c.valid = true;
    c.pt = trace_.at(t);
    const std::size_t mode = trace_.mode;
    c.j = eval_jacobians(spec_.modes[mode].dynamics, c.pt, p_);
    if (split_) c.sj = split(c.j, spec_.n_y);
    c.ip = eval_integrand_partials(spec_.integrand_for(mode), c.pt, p_);
    return c;
  }

  const HybridSystemSpec& spec_;
  const ModeTrace& trace_;
  const VectorXd& p_;
  bool split_;
  mutable std::array<Coefficients, 6> cache_{};
  mutable std::size_t next_ = 0;
};

// lambda for class 01 from [F_y'^T; F_z^T] lambda = [Lambda; -g_z^T].
VectorXd lambda_from_Lambda(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                            const VectorXd& p, const VectorXd& Lambda) {
  const JacobianSet j = eval_jacobians(spec.modes[mode].dynamics, pt, p);
  const IntegrandPartials ip = eval_integrand_partials(spec.integrand_for(mode), pt, p);
  MatrixXd m(spec.n_x(), spec.n_x());
  m << j.yd.transpose(), j.z.transpose();
  VectorXd rhs(spec.n_x());
  rhs << Lambda, -ip.z.transpose();
  return detail::solve_full_rank(m, rhs, ErrorKind::SingularMatrix, "adjoint [F_yd | F_z]^T");
}

// mu for the split classes from k_z^T mu = -(f_z^T lambda + g_z^T).
VectorXd mu_from_lambda(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                        const VectorXd& p, const VectorXd& lambda) {
  const SplitJacobians sj = split(eval_jacobians(spec.modes[mode].dynamics, pt, p), spec.n_y);
  const IntegrandPartials ip = eval_integrand_partials(spec.integrand_for(mode), pt, p);
  return detail::solve_full_rank(sj.k_z.transpose(),
                                 -(sj.f_z.transpose() * lambda + ip.z.transpose()),
                                 ErrorKind::SingularMatrix, "adjoint k_z^T");
}

DaeState start_state(const HybridSystemSpec& spec, const AdjointSystem& sys,
                     const AdjointValues& v) {
  DaeState st;
  st.t = v.t;
  const Index ny = spec.n_y;
  if (spec.dae_class == DaeClass::FullyImplicit01) {
    st.x = v.Lambda;
    st.xa = v.lambda;
  } else {
    st.x = v.lambda;
    st.xa = v.mu;
  }
  // The residual is linear in xdot with identity top rows.
  st.xdot = -sys.residual(st.t, VectorXd::Zero(ny), st.x, st.xa).head(ny);
  st.s = MatrixXd(ny, 0);
  st.sdot = MatrixXd(ny, 0);
  st.w = MatrixXd(st.xa.size(), 0);
  st.q = VectorXd::Zero(sys.quadrature_size());
  return st;
}

AdjointValues values_of(const HybridSystemSpec& spec, const DaeState& st, std::size_t mode) {
  AdjointValues v;
  v.t = st.t;
  v.mode = mode;
  if (spec.dae_class == DaeClass::FullyImplicit01) {
    v.Lambda = st.x;
    v.lambda = st.xa;
  } else {
    v.lambda = st.x;
    v.mu = st.xa;
  }
  return v;
}

double integrand_at(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                    const VectorXd& p) {
  return eval_integrand(spec.integrand_for(mode), pt, p);
}

void require_continuity(const HybridSystemSpec& spec, const TransitionRecord& rec,
                        const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const Index n = ny + nz;
  auto fail = [&](const std::string& what) {
    throw HybridError(ErrorKind::UnsupportedTransition,
                      "adjoint memory transfer needs a continuous transition at t=" +
                          std::to_string(rec.t) + " (" + what + ")");
  };
  SensitivityState unit;
  unit.s = MatrixXd::Zero(ny, n);
  unit.s.leftCols(ny).setIdentity();
  unit.w = MatrixXd::Zero(nz, n);
  unit.w.rightCols(nz).setIdentity();
  unit.sd = MatrixXd::Zero(ny, n);
  const JumpResult lin = fsa_jump(spec, rec, p, unit, false);
  constexpr double kTol = 1e-6;
  if ((lin.after.s - unit.s).cwiseAbs().maxCoeff() > kTol ||
      (nz > 0 && (lin.after.w - unit.w).cwiseAbs().maxCoeff() > kTol)) {
    fail("state map is not the identity");
  }
  const Index np = spec.n_p();
  SensitivityState zero{MatrixXd::Zero(ny, np), MatrixXd::Zero(ny, np), MatrixXd::Zero(nz, np)};
  const JumpResult aff = fsa_jump(spec, rec, p, zero, true);
  if (aff.after.s.cwiseAbs().maxCoeff() > kTol ||
      (nz > 0 && aff.after.w.cwiseAbs().maxCoeff() > kTol)) {
    fail("state map depends on p");
  }
  const double gm = integrand_at(spec, rec.mode_before, rec.before, p);
  const double gp = integrand_at(spec, rec.mode_after, rec.after, p);
  if (std::abs(gm - gp) > 1e-8 * (1.0 + std::abs(gm))) fail("integrand jumps");
}

}  // namespace

JumpLinearization build_jump_linearization(const HybridSystemSpec& spec,
                                           const TransitionRecord& rec, const VectorXd& p,
                                           const MatrixXd& sstar_before,
                                           const MatrixXd& wstar_before) {
  const Index ny = spec.n_y;
  const Index np = spec.n_p();
  JumpLinearization out;
  {
    const SensitivityState before = complete_sensitivity(
        spec, rec.mode_before, rec.before, p, MatrixXd::Zero(ny, np), sstar_before, wstar_before,
        true);
    const JumpResult r = fsa_jump(spec, rec, p, before, true);
    out.alpha = r.tau;
    out.Gamma = r.after.s;
  }
  {
    const SensitivityState before = complete_sensitivity(
        spec, rec.mode_before, rec.before, p, MatrixXd::Identity(ny, ny), {}, {}, false);
    const JumpResult r = fsa_jump(spec, rec, p, before, false);
    out.beta = r.tau;
    out.Delta = r.after.s;
  }
  return out;
}

VectorXd adjoint_rhs(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                     const VectorXd& p, const AdjointValues& adj, const VectorXd& xdot) {
  ModeTrace single;
  single.mode = mode;
  single.t_start = single.t_end = pt.t;
  StepRecord s;
  s.t_left = s.t_right = pt.t;
  s.y_left = s.y_right = pt.y;
  s.yd_left = s.yd_right = pt.yd;
  s.z_left = s.z_right = pt.z;
  single.steps.push_back(s);
  single.ystar = pt.ystar;
  single.zstar = pt.zstar;
  const AdjointSystem sys(spec, single, p);
  if (spec.dae_class == DaeClass::FullyImplicit01) {
    return sys.residual(pt.t, xdot, adj.Lambda, adj.lambda);
  }
  return sys.residual(pt.t, xdot, adj.lambda, adj.mu);
}

VectorXd adjoint_algebraic_residual(const HybridSystemSpec& spec, std::size_t mode,
                                    const Point& pt, const VectorXd& p,
                                    const AdjointValues& adj) {
  const JacobianSet j = eval_jacobians(spec.modes[mode].dynamics, pt, p);
  const IntegrandPartials ip = eval_integrand_partials(spec.integrand_for(mode), pt, p);
  if (spec.dae_class == DaeClass::FullyImplicit01) {
    return j.z.transpose() * adj.lambda + ip.z.transpose();
  }
  const SplitJacobians sj = split(j, spec.n_y);
  return sj.f_z.transpose() * adj.lambda + sj.k_z.transpose() * adj.mu + ip.z.transpose();
}

TerminalConditions adjoint_final_conditions(const HybridSystemSpec& spec,
                                            const ForwardResult& fwd) {
  const ModeTrace& last = fwd.traces.back();
  const Point pt = last.at(last.t_end);
  const VectorXd& p = fwd.p;
  TerminalConditions out;
  out.values.t = last.t_end;
  out.values.mode = last.mode;
  out.increment = RowVectorXd::Zero(spec.n_p());
  switch (spec.dae_class) {
    case DaeClass::FullyImplicit01:
      out.values.Lambda = VectorXd::Zero(spec.n_y);
      out.values.lambda = lambda_from_Lambda(spec, last.mode, pt, p, out.values.Lambda);
      break;
    case DaeClass::Hessenberg2: {
      const Hi2Boundary b = hi2_terminal(spec, last, p);
      out.values.lambda = b.lambda;
      out.values.mu = b.mu;
      out.increment = b.increment;
      break;
    }
    case DaeClass::Index1Memory:
      out.values.lambda = VectorXd::Zero(spec.n_y);
      out.values.mu = mu_from_lambda(spec, last.mode, pt, p, out.values.lambda);
      break;
  }
  return out;
}

MemoryTransfer memory_transfer(const HybridSystemSpec& spec, const TransitionRecord& rec,
                               const VectorXd& p) {
  const SplitJacobians sj =
      split(eval_jacobians(spec.modes[rec.mode_before].dynamics, rec.before, p), spec.n_y);
  const MatrixXd kz_inv =
      detail::solve_full_rank(sj.k_z, MatrixXd::Identity(spec.n_z, spec.n_z),
                              ErrorKind::SingularMatrix, "k_z at transition");
  MemoryTransfer m;
  m.phi_y = -kz_inv * sj.k_y;
  m.phi_ystar = -kz_inv * sj.k_ystar;
  m.phi_zstar = -kz_inv * sj.k_zstar;
  m.phi_p = -kz_inv * sj.k_p;
  return m;
}

AdjointResult run_asa(const HybridSystemSpec& spec, const ForwardResult& fwd,
                      const AdjointOptions& options) {
  const VectorXd& p = fwd.p;
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const Index np = spec.n_p();
  const std::size_t n_tr = fwd.transitions.size();
  if (fwd.traces.size() != n_tr + 1) {
    throw HybridError(ErrorKind::InvalidConfiguration,
                      "forward result has inconsistent traces and transitions");
  }

  AdjointResult res;
  res.G = fwd.G;
  const TerminalConditions term = adjoint_final_conditions(spec, fwd);
  RowVectorXd grad = term.increment;
  AdjointValues cur = term.values;

  // Index1Memory accumulators.
  RowVectorXd acc_A = RowVectorXd::Zero(nz);
  RowVectorXd acc_B = RowVectorXd::Zero(ny);

  for (std::size_t k = n_tr + 1; k-- > 0;) {
    const ModeTrace& trace = fwd.traces[k];
    const AdjointSystem sys(spec, trace, p);
    DaeState st = start_state(spec, sys, cur);
    if (options.store_trajectory) res.trajectory.push_back(values_of(spec, st, trace.mode));
    res.max_algebraic_residual = std::max(res.max_algebraic_residual, sys.algebraic_residual(st));
    if (trace.t_end > trace.t_start) {
      double h = 0.0;
      st = advance(sys, st, trace.t_start, fwd.tol, h, [&](const DaeState& s) {
        ++res.steps;
        res.max_algebraic_residual =
            std::max(res.max_algebraic_residual, sys.algebraic_residual(s));
        if (options.store_trajectory) res.trajectory.push_back(values_of(spec, s, trace.mode));
      });
    }
    const VectorXd q = -st.q;
    grad += q.head(np).transpose();
    AdjointValues plus = values_of(spec, st, trace.mode);

    if (k == 0) {
      SensitivityState init{fwd.s0, fwd.sd0, fwd.w0};
      if (init.s.size() == 0 && np > 0) init = initial_sensitivities(spec, fwd.initial, p);
      switch (spec.dae_class) {
        case DaeClass::FullyImplicit01:
          grad -= plus.Lambda.transpose() * init.s;
          break;
        case DaeClass::Hessenberg2:
          grad += plus.lambda.transpose() * init.s;
          break;
        case DaeClass::Index1Memory: {
          const RowVectorXd I = q.segment(np, ny).transpose();
          const RowVectorXd J = q.tail(nz).transpose();
          grad += (plus.lambda.transpose() + I + acc_B) * init.s;
          if (nz > 0) grad += (J + acc_A) * init.w;
          break;
        }
      }
      break;
    }

    const TransitionRecord& rec = fwd.transitions[k - 1];
    AdjointJumpRecord jr;
    jr.index = rec.index;
    jr.t = rec.t;
    jr.plus = plus;
    RowVectorXd inc = RowVectorXd::Zero(np);
    AdjointValues minus;
    minus.t = rec.t;
    minus.mode = rec.mode_before;

    switch (spec.dae_class) {
      case DaeClass::FullyImplicit01: {
        const JumpLinearization L = build_jump_linearization(spec, rec, p);
        const double dg = integrand_at(spec, rec.mode_before, rec.before, p) -
                          integrand_at(spec, rec.mode_after, rec.after, p);
        inc = dg * L.alpha - plus.Lambda.transpose() * L.Gamma;
        minus.Lambda = L.Delta.transpose() * plus.Lambda - dg * L.beta.transpose();
        minus.lambda = lambda_from_Lambda(spec, rec.mode_before, rec.before, p, minus.Lambda);
        break;
      }
      case DaeClass::Hessenberg2: {
        const JumpLinearization L = build_jump_linearization(spec, rec, p);
        const double dg = integrand_at(spec, rec.mode_before, rec.before, p) -
                          integrand_at(spec, rec.mode_after, rec.after, p);
        const VectorXd X = dg * L.beta.transpose() + L.Delta.transpose() * plus.lambda;
        inc = dg * L.alpha + plus.lambda.transpose() * L.Gamma;
        const Hi2Boundary b = hi2_jump(spec, fwd.traces[k - 1], rec, X, p);
        inc += b.increment;
        minus.lambda = b.lambda;
        minus.mu = b.mu;
        break;
      }
      case DaeClass::Index1Memory: {
        require_continuity(spec, rec, p);
        const RowVectorXd I = q.segment(np, ny).transpose();
        const RowVectorXd J = q.tail(nz).transpose();
        const MemoryTransfer phi = memory_transfer(spec, rec, p);
        const RowVectorXd JA = J + acc_A;
        minus.lambda = plus.lambda + (I + JA * phi.phi_y + acc_B).transpose();
        inc = JA * phi.phi_p;
        acc_B = JA * phi.phi_ystar;
        acc_A = JA * phi.phi_zstar;
        minus.mu = mu_from_lambda(spec, rec.mode_before, rec.before, p, minus.lambda);
        jr.acc_A = acc_A;
        jr.acc_B = acc_B;
        break;
      }
    }
    grad += inc;
    jr.minus = minus;
    jr.increment = inc;
    res.jumps.push_back(std::move(jr));
    cur = minus;
  }
  res.dGdp = grad;
  return res;
}

}  // namespace hybridsens
