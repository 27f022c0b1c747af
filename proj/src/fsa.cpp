#include "hybridsens/fsa.hpp"

#include <cmath>
#include <string>

#include "hybridsens/errors.hpp"
#include "hybridsens/hi2.hpp"
#include "linalg.hpp"

namespace hybridsens {

namespace {

// r * m, treating an empty row as zero.
RowVectorXd row_times(const RowVectorXd& r, const MatrixXd& m) {
  if (r.size() == 0 || m.rows() == 0) return RowVectorXd::Zero(m.cols());
  return r * m;
}

MatrixXd zeros_like_cols(Index rows, Index cols) { return MatrixXd::Zero(rows, cols); }

}  // namespace

MatrixXd fsa_rhs(const ModeDynamics& dyn, const Point& pt, const VectorXd& p,
                 const SensitivityState& sens, const MatrixXd& sstar, const MatrixXd& wstar) {
  const JacobianSet j = eval_jacobians(dyn, pt, p);
  MatrixXd r = j.yd * sens.sd + j.y * sens.s + j.p;
  if (j.z.cols() > 0) r += j.z * sens.w;
  if (sstar.size() && j.ystar.cols() > 0) r += j.ystar * sstar;
  if (wstar.size() && j.zstar.cols() > 0) r += j.zstar * wstar;
  return r;
}

SensitivityState complete_sensitivity(const HybridSystemSpec& spec, std::size_t mode,
                                      const Point& pt, const VectorXd& p, const MatrixXd& s,
                                      const MatrixXd& sstar, const MatrixXd& wstar, bool affine) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const Index nc = s.cols();
  const auto& dyn = spec.modes[mode].dynamics;
  const JacobianSet j = eval_jacobians(dyn, pt, p);
  MatrixXd forcing = MatrixXd::Zero(ny + nz, nc);
  if (affine) {
    forcing = j.p;
    if (spec.dae_class == DaeClass::Index1Memory && sstar.size()) {
      forcing += j.ystar * sstar + j.zstar * wstar;
    }
  }
  SensitivityState out;
  out.s = s;
  if (spec.dae_class == DaeClass::Hessenberg2) {
    out.w = hi2_hidden_sensitivity(spec, mode, pt, p, s, affine);
    out.sd = -(j.y.topRows(ny) * s + j.z.topRows(ny) * out.w + forcing.topRows(ny));
    return out;
  }
  MatrixXd m(ny + nz, ny + nz);
  m << j.yd, j.z;
  const MatrixXd sol = detail::solve_full_rank(m, -(j.y * s + forcing), ErrorKind::SingularMatrix,
                                               "sensitivity completion [F_yd | F_z]");
  out.sd = sol.topRows(ny);
  out.w = sol.bottomRows(nz);
  return out;
}

SensitivityState initial_sensitivities(const HybridSystemSpec& spec, const Point& initial,
                                       const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const Index np = spec.n_p();
  const std::size_t mode = spec.initial_mode;
  const auto& dyn = spec.modes[mode].dynamics;
  const auto& map = spec.initial.map;
  const Point empty{spec.t0, {}, {}, {}, {}, {}};

  switch (spec.dae_class) {
    case DaeClass::FullyImplicit01: {
      if (!map) {
        return complete_sensitivity(spec, mode, initial, p, MatrixXd::Zero(ny, np), {}, {}, true);
      }
      const MapPartials mp = eval_map_partials(*map, initial, empty, p);
      const JacobianSet j = eval_jacobians(dyn, initial, p);
      MatrixXd m(map->rows + ny + nz, 2 * ny + nz);
      m << mp.yd_after, mp.y_after, mp.z_after, j.yd, j.y, j.z;
      MatrixXd rhs(map->rows + ny + nz, np);
      rhs << -mp.p, -j.p;
      const MatrixXd sol = detail::solve_full_rank(m, rhs, ErrorKind::SingularMatrix,
                                                   "initial sensitivity [T0; F]");
      return {sol.middleRows(ny, ny), sol.topRows(ny), sol.bottomRows(nz)};
    }
    case DaeClass::Hessenberg2: {
      MatrixXd s0 = MatrixXd::Zero(ny, np);
      if (map) {
        const MapPartials mp = eval_map_partials(*map, initial, empty, p);
        const SplitJacobians sj = split(eval_jacobians(dyn, initial, p), ny);
        MatrixXd m(map->rows + nz, ny);
        m << mp.y_after, sj.k_y;
        MatrixXd rhs(map->rows + nz, np);
        rhs << -mp.p, -sj.k_p;
        s0 = detail::solve_full_rank(m, rhs, ErrorKind::SingularMatrix, "initial [T0_y; C]");
      }
      return complete_sensitivity(spec, mode, initial, p, s0, {}, {}, true);
    }
    case DaeClass::Index1Memory: {
      // Explicit initial values that do not depend on p; the memory of the
      // first mode is the initial state, so its sensitivities vanish as well.
      SensitivityState out;
      out.s = MatrixXd::Zero(ny, np);
      out.w = MatrixXd::Zero(nz, np);
      const SplitJacobians sj = split(eval_jacobians(dyn, initial, p), ny);
      out.sd = sj.f_p;
      return out;
    }
  }
  return {};
}

RowVectorXd transition_time_sensitivity(const GuardPartials& gp, const Point& before,
                                        const HiddenDerivatives& hd,
                                        const SensitivityState& sens, bool affine) {
  const double drift = guard_drift(gp, before, hd);
  double scale = 1.0 + std::abs(gp.t);
  if (gp.y.size()) scale += gp.y.norm() * before.yd.norm();
  if (gp.yd.size()) scale += gp.yd.norm() * hd.ydd.norm();
  if (gp.z.size()) scale += gp.z.norm() * hd.zd.norm();
  if (!(std::abs(drift) > 1e-12 * scale)) {
    throw HybridError(ErrorKind::GrazingEvent, "guard drift vanishes at t=" +
                                                   std::to_string(before.t));
  }
  RowVectorXd num = row_times(gp.y, sens.s);
  if (sens.sd.size()) num += row_times(gp.yd, sens.sd);
  if (sens.w.size()) num += row_times(gp.z, sens.w);
  if (affine && gp.p.size()) num += gp.p;
  return -num / drift;
}

JumpResult fsa_jump(const HybridSystemSpec& spec, const TransitionRecord& rec, const VectorXd& p,
                    const SensitivityState& before, bool affine) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const Index nc = before.s.cols();
  const std::size_t mb = rec.mode_before;
  const std::size_t ma = rec.mode_after;
  // Parameter forcing terms, dropped (with their N_p columns) when not affine.
  auto forcing = [&](const MatrixXd& m) -> MatrixXd {
    return affine ? m : MatrixXd::Zero(m.rows(), nc);
  };

  const GuardPartials gp = eval_guard_partials(spec.modes[mb].guard, rec.before, p);
  const HiddenDerivatives hm = compute_hidden_derivatives(spec, mb, rec.before, p);
  const HiddenDerivatives hp = compute_hidden_derivatives(spec, ma, rec.after, p);
  JumpResult out;
  out.tau = transition_time_sensitivity(gp, rec.before, hm, before, affine);
  const RowVectorXd& tau = out.tau;

  const TransitionMap& map = spec.modes[mb].exit_map;
  const MapPartials mp = eval_map_partials(map, rec.after, rec.before, p);
  const Index nt = map.rows;

  // Everything in the differentiated map except the unknown post-transition
  // sensitivities.
  MatrixXd known = mp.yd_before * ((before.sd.size() ? before.sd : zeros_like_cols(ny, nc)) +
                                   hm.ydd * tau) +
                   mp.y_before * (before.s + rec.before.yd * tau) + mp.t * tau + forcing(mp.p);
  if (nz > 0) known += mp.z_before * (before.w + hm.zd * tau);
  known += mp.y_after * (rec.after.yd * tau);

  const auto& dyn = spec.modes[ma].dynamics;
  const JacobianSet j = eval_jacobians(dyn, rec.after, p);

  switch (spec.dae_class) {
    case DaeClass::FullyImplicit01: {
      known += mp.yd_after * (hp.ydd * tau);
      if (nz > 0) known += mp.z_after * (hp.zd * tau);
      MatrixXd m(nt + ny + nz, 2 * ny + nz);
      m << mp.yd_after, mp.y_after, mp.z_after, j.yd, j.y, j.z;
      MatrixXd rhs(nt + ny + nz, nc);
      rhs << -known, -forcing(j.p);
      const MatrixXd sol = detail::solve_full_rank(m, rhs, ErrorKind::SingularTransition,
                                                   "sensitivity transition system");
      out.after.sd = sol.topRows(ny);
      out.after.s = sol.middleRows(ny, ny);
      out.after.w = sol.bottomRows(nz);
      break;
    }
    case DaeClass::Hessenberg2: {
      const SplitJacobians sj = split(j, ny);
      MatrixXd m(nt + nz, ny);
      m << mp.y_after, sj.k_y;
      MatrixXd rhs(nt + nz, nc);
      rhs << -known, -(sj.k_y * (rec.after.yd * tau) + sj.k_t * tau + forcing(sj.k_p));
      out.after.s = detail::solve_full_rank(m, rhs, ErrorKind::SingularTransition,
                                            "sensitivity transition [T_y+; C]");
      out.after.w = hi2_hidden_sensitivity(spec, ma, rec.after, p, out.after.s, affine);
      out.after.sd = sj.f_y * out.after.s + sj.f_z * out.after.w + forcing(sj.f_p);
      break;
    }
    case DaeClass::Index1Memory: {
      const SplitJacobians sj = split(j, ny);
      if (nz > 0) known += mp.z_after * (hp.zd * tau);
      MatrixXd m(nt + nz, ny + nz);
      m << mp.y_after, mp.z_after, sj.k_y + sj.k_ystar, sj.k_z + sj.k_zstar;
      MatrixXd rhs(nt + nz, nc);
      rhs << -known, -forcing(sj.k_p);
      const MatrixXd sol = detail::solve_full_rank(m, rhs, ErrorKind::SingularTransition,
                                                   "sensitivity transition [T; k]");
      const double mismatch = (m * sol - rhs).cwiseAbs().maxCoeff();
      const double scale = 1.0 + (rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0);
      if (mismatch > 1e-8 * scale) {
        throw HybridError(ErrorKind::SingularTransition,
                          "sensitivity transition equations are inconsistent (residual " +
                              std::to_string(mismatch) + ")");
      }
      out.after.s = sol.topRows(ny);
      out.after.w = sol.bottomRows(nz);
      // The new mode's memory sensitivities are the post-transition values.
      out.after.sd = (sj.f_y + sj.f_ystar) * out.after.s + (sj.f_z + sj.f_zstar) * out.after.w +
                     forcing(sj.f_p);
      break;
    }
  }
  return out;
}

ForwardResult run_fsa(const HybridSystemSpec& spec, const VectorXd& p, const Tolerances& tol) {
  ForwardOptions opt;
  opt.tol = tol;
  opt.sensitivities = true;
  return simulate(spec, p, opt);
}

}  // namespace hybridsens
