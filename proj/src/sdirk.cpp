#include "hybridsens/sdirk.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridsens/errors.hpp"

namespace hybridsens {

namespace {

const double kSqrt2 = std::sqrt(2.0);
const double kGamma = 2.0 - kSqrt2;
const double kDiag = kGamma / 2.0;
const double kW = kSqrt2 / 4.0;
// b - bhat for the embedded third-order solution.
const double kE1 = (4.0 * kW - 1.0) / 3.0;
const double kE2 = -1.0 / 3.0;
const double kE3 = 2.0 * kDiag / 3.0;

constexpr int kMaxNewton = 10;
constexpr double kNewtonTol = 1e-6;
constexpr double kRcondMin = 1e-14;

struct Stage {
  bool converged = false;
  VectorXd k;
  VectorXd x;
  VectorXd xa;
  int iterations = 0;
};

Eigen::PartialPivLU<MatrixXd> factor(const Linearization& lin, double hd) {
  const Index nd = lin.x.cols();
  const Index na = lin.xa.cols();
  MatrixXd m(lin.x.rows(), nd + na);
  m.leftCols(nd) = lin.xdot + hd * lin.x;
  m.rightCols(na) = lin.xa;
  Eigen::PartialPivLU<MatrixXd> lu(m);
  if (!(lu.rcond() > kRcondMin)) {
    throw HybridError(ErrorKind::SingularIterationMatrix,
                      "stage matrix has reciprocal condition " + std::to_string(lu.rcond()));
  }
  return lu;
}

double update_norm(const VectorXd& dx, const VectorXd& x, const VectorXd& dxa, const VectorXd& xa,
                   const Tolerances& tol) {
  double sum = 0.0;
  for (Index i = 0; i < dx.size(); ++i) {
    const double r = dx(i) / (tol.atol + tol.rtol * std::abs(x(i)));
    sum += r * r;
  }
  for (Index i = 0; i < dxa.size(); ++i) {
    const double r = dxa(i) / (tol.atol + tol.rtol * std::abs(xa(i)));
    sum += r * r;
  }
  const Index n = dx.size() + dxa.size();
  return n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

// Newton iteration for one implicit stage: unknowns (k, xa) with
// x = base + hd k.
Stage solve_stage(const DaeSystem& sys, double t, const VectorXd& base, VectorXd k, VectorXd xa,
                  double hd, const Tolerances& tol) {
  const Index nd = sys.differential_size();
  Stage st;
  VectorXd x = base + hd * k;
  for (int refresh = 0; refresh < 2; ++refresh) {
    const auto lu = factor(sys.linearize(t, k, x, xa, false), hd);
    double prev = 0.0;
    for (int it = 0; it < kMaxNewton; ++it) {
      ++st.iterations;
      const VectorXd r = sys.residual(t, k, x, xa);
      const VectorXd delta = lu.solve(-r);
      const VectorXd dk = delta.head(nd);
      const VectorXd dxa = delta.tail(delta.size() - nd);
      k += dk;
      xa += dxa;
      x = base + hd * k;
      const double norm = update_norm(hd * dk, x, dxa, xa, tol);
      if (!std::isfinite(norm)) break;
      if (norm <= kNewtonTol || (it > 0 && norm > 0.5 * prev && norm <= 1e-2)) {
        st.converged = true;
        st.k = std::move(k);
        st.x = std::move(x);
        st.xa = std::move(xa);
        return st;
      }
      if (it > 0 && norm > 2.0 * prev) break;
      prev = norm;
    }
    if (!k.allFinite() || !xa.allFinite()) break;
  }
  return st;
}

void append(VectorXd& out, Index& pos, const VectorXd& v) {
  out.segment(pos, v.size()) = v;
  pos += v.size();
}

VectorXd flat(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

}  // namespace

VectorXd DaeSystem::quadrature(const DaeState&) const { return VectorXd(); }

double weighted_rms(const VectorXd& err, const VectorXd& a, const VectorXd& b,
                    const Tolerances& tol) {
  if (err.size() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < err.size(); ++i) {
    const double scale = tol.atol + tol.rtol * std::max(std::abs(a(i)), std::abs(b(i)));
    const double r = err(i) / scale;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(err.size()));
}

double step_factor(double error) {
  if (error <= 0.0) return 5.0;
  return std::clamp(0.9 * std::pow(error, -1.0 / 3.0), 0.2, 5.0);
}

StepAttempt attempt_step(const DaeSystem& sys, const DaeState& start, double h,
                         const Tolerances& tol, bool error_on_quadratures) {
  StepAttempt out;
  const double hd = h * kDiag;
  const Index nt = sys.tangent_columns();
  const Index nq = sys.quadrature_size();

  const VectorXd& k1 = start.xdot;
  const Stage s2 = solve_stage(sys, start.t + kGamma * h, start.x + h * kDiag * k1, k1, start.xa,
                               hd, tol);
  out.newton_iterations = s2.iterations;
  if (!s2.converged) return out;
  const VectorXd base3 = start.x + h * kW * (k1 + s2.k);
  const Stage s3 = solve_stage(sys, start.t + h, base3, s2.k, s2.xa, hd, tol);
  out.newton_iterations += s3.iterations;
  if (!s3.converged) return out;

  DaeState& end = out.end;
  end.t = start.t + h;
  end.x = s3.x;
  end.xdot = s3.k;
  end.xa = s3.xa;

  // Tangents share the stage matrices, re-linearized at the converged stages.
  DaeState mid;
  mid.t = start.t + kGamma * h;
  mid.x = s2.x;
  mid.xdot = s2.k;
  mid.xa = s2.xa;
  MatrixXd ks2, ks3;
  if (nt > 0) {
    const Index nd = sys.differential_size();
    auto tangent_stage = [&](const Stage& st, double t, const MatrixXd& sbase, MatrixXd& ks,
                             MatrixXd& w) {
      const Linearization lin = sys.linearize(t, st.k, st.x, st.xa, true);
      const auto lu = factor(lin, hd);
      const MatrixXd sol = lu.solve(-(lin.x * sbase + lin.forcing));
      ks = sol.topRows(nd);
      w = sol.bottomRows(sol.rows() - nd);
    };
    MatrixXd w2, w3;
    const MatrixXd sbase2 = start.s + h * kDiag * start.sdot;
    tangent_stage(s2, mid.t, sbase2, ks2, w2);
    mid.s = sbase2 + hd * ks2;
    mid.sdot = ks2;
    mid.w = w2;
    const MatrixXd sbase3 = start.s + h * kW * (start.sdot + ks2);
    tangent_stage(s3, end.t, sbase3, ks3, w3);
    end.s = sbase3 + hd * ks3;
    end.sdot = ks3;
    end.w = w3;
  } else {
    end.s = start.s;
    end.sdot = start.sdot;
    end.w = start.w;
  }

  VectorXd e_q, q_start, q_end;
  if (nq > 0) {
    const VectorXd q1 = sys.quadrature(start);
    const VectorXd q2 = sys.quadrature(mid);
    const VectorXd q3 = sys.quadrature(end);
    end.q = start.q + h * (kW * q1 + kW * q2 + kDiag * q3);
    if (error_on_quadratures) {
      e_q = h * (kE1 * q1 + kE2 * q2 + kE3 * q3);
      q_start = start.q;
      q_end = end.q;
    }
  } else {
    end.q = start.q;
  }

  const Index n = end.x.size() + end.s.size() + e_q.size();
  VectorXd err(n), a(n), b(n);
  Index pe = 0, pa = 0, pb = 0;
  append(err, pe, h * (kE1 * k1 + kE2 * s2.k + kE3 * s3.k));
  append(a, pa, start.x);
  append(b, pb, end.x);
  if (nt > 0) {
    append(err, pe, flat(h * (kE1 * start.sdot + kE2 * ks2 + kE3 * ks3)));
    append(a, pa, flat(start.s));
    append(b, pb, flat(end.s));
  }
  append(err, pe, e_q);
  append(a, pa, q_start);
  append(b, pb, q_end);
  out.error = weighted_rms(err, a, b, tol);
  out.converged = std::isfinite(out.error);
  return out;
}

DaeState advance(const DaeSystem& sys, DaeState state, double t_end, const Tolerances& tol,
                 double& h, const std::function<void(const DaeState&)>& observer,
                 std::size_t max_steps) {
  const double dir = t_end >= state.t ? 1.0 : -1.0;
  h = std::abs(h);
  if (!(h > 0.0)) h = 1e-6 * std::max(1.0, std::abs(t_end - state.t));
  std::size_t steps = 0;
  while (dir * (t_end - state.t) > 0.0) {
    const double remaining = std::abs(t_end - state.t);
    const bool last = h >= remaining * (1.0 - 1e-12);
    const double hh = last ? remaining : h;
    const double h_min = 1e-14 * std::max(1.0, std::abs(state.t));
    if (hh < h_min && !last) {
      throw HybridError(ErrorKind::NewtonDivergence,
                        "step size underflow at t=" + std::to_string(state.t));
    }
    if (++steps > max_steps) {
      throw HybridError(ErrorKind::MaxStepsExceeded, "more than " + std::to_string(max_steps) +
                                                         " step attempts");
    }
    StepAttempt at = attempt_step(sys, state, dir * hh, tol);
    if (!at.converged) {
      h = hh * 0.25;
      if (last && hh < h_min) {
        throw HybridError(ErrorKind::NewtonDivergence,
                          "Newton failure at minimal step, t=" + std::to_string(state.t));
      }
      continue;
    }
    if (at.error > 1.0) {
      h = hh * std::max(0.2, step_factor(at.error));
      continue;
    }
    if (last) at.end.t = t_end;
    state = std::move(at.end);
    if (observer) observer(state);
    h = last ? std::max(h, hh * step_factor(at.error)) : hh * step_factor(at.error);
  }
  return state;
}

}  // namespace hybridsens
