#include "hybridsens/hi2.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridsens/errors.hpp"
#include "linalg.hpp"

namespace hybridsens {

namespace {

double fd_time_step(double t) { return 1e-6 * (1.0 + std::abs(t)); }

MatrixXd checked_inverse(const MatrixXd& m, ErrorKind kind, const std::string& what) {
  return detail::solve_full_rank(m, MatrixXd::Identity(m.rows(), m.rows()), kind, what);
}

// C f + k_t as a function of z with y and t fixed.
VectorXd hidden_constraint(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                           const VectorXd& p) {
  const auto& dyn = spec.modes[mode].dynamics;
  const SplitJacobians sj = split(eval_jacobians(dyn, pt, p), spec.n_y);
  return sj.k_y * split_rhs(dyn, pt, p, spec.n_y) + sj.k_t;
}

VectorXd solve_hidden_z(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                        const VectorXd& p, ErrorKind kind) {
  auto with_z = [&](const VectorXd& z) {
    Point q = pt;
    q.z = z;
    return q;
  };
  return detail::newton_solve(
      [&](const VectorXd& z) { return hidden_constraint(spec, mode, with_z(z), p); },
      [&](const VectorXd& z) {
        const SplitJacobians sj =
            split(eval_jacobians(spec.modes[mode].dynamics, with_z(z), p), spec.n_y);
        return MatrixXd(sj.k_y * sj.f_z);
      },
      pt.z, kind, "hidden constraint CB");
}

// Derivative of a point-wise quantity along the stored trajectory.
template <typename F>
auto trajectory_derivative(const ModeTrace& trace, double t, F&& f) {
  const double d = fd_time_step(t);
  if (t - d >= trace.t_start && t + d <= trace.t_end) {
    return ((f(trace.at(t + d)) - f(trace.at(t - d))) / (2.0 * d)).eval();
  }
  if (t + 2 * d <= trace.t_end) {
    return ((-3.0 * f(trace.at(t)) + 4.0 * f(trace.at(t + d)) - f(trace.at(t + 2 * d))) /
            (2.0 * d))
        .eval();
  }
  return ((3.0 * f(trace.at(t)) - 4.0 * f(trace.at(t - d)) + f(trace.at(t - 2 * d))) / (2.0 * d))
      .eval();
}

}  // namespace

Hi2Workspace Hi2Workspace::at(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                              const VectorXd& p) {
  const SplitJacobians sj = split(eval_jacobians(spec.modes[mode].dynamics, pt, p), spec.n_y);
  Hi2Workspace ws;
  ws.A = sj.f_y;
  ws.B = sj.f_z;
  ws.C = sj.k_y;
  ws.f_p = sj.f_p;
  ws.k_p = sj.k_p;
  ws.f_t = sj.f_t;
  ws.k_t = sj.k_t;
  ws.cb_inv = checked_inverse(ws.C * ws.B, ErrorKind::SingularMatrix,
                              "CB at t=" + std::to_string(pt.t));
  return ws;
}

VectorXd hi2_hidden_residual(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                             const VectorXd& p) {
  const SplitJacobians sj = split(eval_jacobians(spec.modes[mode].dynamics, pt, p), spec.n_y);
  return sj.k_y * pt.yd + sj.k_t;
}

Point hi2_initialize(const HybridSystemSpec& spec, const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const std::size_t mode = spec.initial_mode;
  const auto& dyn = spec.modes[mode].dynamics;
  Point pt;
  pt.t = spec.t0;
  pt.y = spec.initial.y0;
  pt.z = spec.initial.z0;
  pt.yd = VectorXd::Zero(ny);
  if (spec.initial.map) {
    const TransitionMap& map = *spec.initial.map;
    const Point empty{spec.t0, {}, {}, {}, {}, {}};
    auto with_y = [&](const VectorXd& y) {
      Point q = pt;
      q.y = y;
      return q;
    };
    pt.y = detail::newton_solve(
        [&](const VectorXd& y) {
          const Point q = with_y(y);
          VectorXd r(map.rows + nz);
          r << eval_map(map, q, empty, p), eval_residual(dyn, q, p).tail(nz);
          return r;
        },
        [&](const VectorXd& y) {
          const Point q = with_y(y);
          const MapPartials mp = eval_map_partials(map, q, empty, p);
          const SplitJacobians sj = split(eval_jacobians(dyn, q, p), ny);
          MatrixXd m(map.rows + nz, ny);
          m << mp.y_after, sj.k_y;
          return m;
        },
        pt.y, ErrorKind::SingularMatrix, "initial [T0_y; C]");
  }
  pt.z = solve_hidden_z(spec, mode, pt, p, ErrorKind::SingularMatrix);
  pt.yd = split_rhs(dyn, pt, p, ny);
  return pt;
}

Point hi2_transition(const HybridSystemSpec& spec, std::size_t mode_before,
                     std::size_t mode_after, const Point& before, const VectorXd& p) {
  const Index ny = spec.n_y;
  const Index nz = spec.n_z;
  const TransitionMap& map = spec.modes[mode_before].exit_map;
  const auto& dyn = spec.modes[mode_after].dynamics;
  Point after;
  after.t = before.t;
  after.y = before.y;
  after.yd = before.yd;
  after.z = before.z;
  auto with_y = [&](const VectorXd& y) {
    Point q = after;
    q.y = y;
    return q;
  };
  after.y = detail::newton_solve(
      [&](const VectorXd& y) {
        const Point q = with_y(y);
        VectorXd r(map.rows + nz);
        r << eval_map(map, q, before, p), eval_residual(dyn, q, p).tail(nz);
        return r;
      },
      [&](const VectorXd& y) {
        const Point q = with_y(y);
        const MapPartials mp = eval_map_partials(map, q, before, p);
        const SplitJacobians sj = split(eval_jacobians(dyn, q, p), ny);
        MatrixXd m(map.rows + nz, ny);
        m << mp.y_after, sj.k_y;
        return m;
      },
      after.y, ErrorKind::SingularTransition, "transition [T_y+; C]");
  after.z = solve_hidden_z(spec, mode_after, after, p, ErrorKind::SingularTransition);
  after.yd = split_rhs(dyn, after, p, ny);
  return after;
}

void hi2_project(const HybridSystemSpec& spec, std::size_t mode, const VectorXd& p, Point& pt,
                 const MatrixXd& s, MatrixXd& sd, MatrixXd& w) {
  const auto& dyn = spec.modes[mode].dynamics;
  pt.z = solve_hidden_z(spec, mode, pt, p, ErrorKind::SingularMatrix);
  pt.yd = split_rhs(dyn, pt, p, spec.n_y);
  if (s.size() == 0) return;
  w = hi2_hidden_sensitivity(spec, mode, pt, p, s, true);
  const SplitJacobians sj = split(eval_jacobians(dyn, pt, p), spec.n_y);
  sd = sj.f_y * s + sj.f_z * w + sj.f_p;
}

MatrixXd hi2_hidden_sensitivity(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                                const VectorXd& p, const MatrixXd& s, bool affine) {
  const Index ny = spec.n_y;
  const Hi2Workspace ws = Hi2Workspace::at(spec, mode, pt, p);
  const auto& dyn = spec.modes[mode].dynamics;
  const double d = fd_time_step(pt.t);
  Point plus = pt;
  Point minus = pt;
  plus.y = pt.y + d * pt.yd;
  plus.t = pt.t + d;
  minus.y = pt.y - d * pt.yd;
  minus.t = pt.t - d;
  const SplitJacobians jp = split(eval_jacobians(dyn, plus, p), ny);
  const SplitJacobians jm = split(eval_jacobians(dyn, minus, p), ny);
  MatrixXd rhs = ws.C * ws.A * s + ((jp.k_y - jm.k_y) / (2.0 * d)) * s;
  if (affine) rhs += ws.C * ws.f_p + (jp.k_p - jm.k_p) / (2.0 * d);
  return -ws.cb_inv * rhs;
}

VectorXd hi2_adjoint_mu(const HybridSystemSpec& spec, const ModeTrace& trace, double t,
                        const VectorXd& lambda, const VectorXd& p) {
  const Index ny = spec.n_y;
  const auto& dyn = spec.modes[trace.mode].dynamics;
  const QuadratureSpec& q = spec.integrand_for(trace.mode);
  const Point pt = trace.at(t);
  const Hi2Workspace ws = Hi2Workspace::at(spec, trace.mode, pt, p);
  const IntegrandPartials ip = eval_integrand_partials(q, pt, p);
  const MatrixXd b_dot = trajectory_derivative(trace, pt.t, [&](const Point& x) {
    return MatrixXd(split(eval_jacobians(dyn, x, p), ny).f_z);
  });
  const VectorXd gz_dot = trajectory_derivative(trace, pt.t, [&](const Point& x) {
    return VectorXd(eval_integrand_partials(q, x, p).z.transpose());
  });
  const VectorXd rhs = (b_dot - ws.A * ws.B).transpose() * lambda + gz_dot -
                       ws.B.transpose() * ip.y.transpose();
  return ws.cb_inv.transpose() * rhs;
}

Hi2Boundary hi2_terminal(const HybridSystemSpec& spec, const ModeTrace& last, const VectorXd& p) {
  const Point pt = last.at(last.t_end);
  const Hi2Workspace ws = Hi2Workspace::at(spec, last.mode, pt, p);
  const IntegrandPartials ip = eval_integrand_partials(spec.integrand_for(last.mode), pt, p);
  Hi2Boundary out;
  const RowVectorXd v = ip.z * ws.cb_inv;  // g_z (CB)^-1
  out.lambda = -(v * ws.C).transpose();
  out.mu = hi2_adjoint_mu(spec, last, last.t_end, out.lambda, p);
  out.increment = -v * ws.k_p;
  return out;
}

Hi2Boundary hi2_jump(const HybridSystemSpec& spec, const ModeTrace& before_trace,
                     const TransitionRecord& rec, const VectorXd& X, const VectorXd& p) {
  const Point& pt = rec.before;
  const Hi2Workspace ws = Hi2Workspace::at(spec, rec.mode_before, pt, p);
  const IntegrandPartials ip = eval_integrand_partials(spec.integrand_for(rec.mode_before), pt, p);
  const RowVectorXd v = (ip.z + X.transpose() * ws.B) * ws.cb_inv;  // (g_z + X^T B)(CB)^-1
  Hi2Boundary out;
  out.lambda = X - (v * ws.C).transpose();
  out.mu = hi2_adjoint_mu(spec, before_trace, rec.t, out.lambda, p);
  out.increment = -v * ws.k_p;
  return out;
}

}  // namespace hybridsens
