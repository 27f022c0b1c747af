#pragma once

// TR-BDF2 (ESDIRK, stiffly accurate, L-stable, order 2 with an order-3
// embedded solution) for semi-explicit or fully implicit DAEs
//
//   R(t, x', x, xa) = 0,   x differential, xa algebraic,
//
// together with linear tangent columns (S, W) satisfying
//   R_x' S' + R_x S + R_xa W + P = 0
// and explicit quadratures q' = Q(t, x, xa, S, W). Negative step sizes
// integrate backward in time.

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace hybridsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Tolerances {
  double rtol = 1e-8;
  double atol = 1e-12;
};

struct DaeState {
  double t = 0.0;
  VectorXd x;
  VectorXd xdot;
  VectorXd xa;
  MatrixXd s;     ///< tangent columns of x
  MatrixXd sdot;  ///< their time derivatives
  MatrixXd w;     ///< tangent columns of xa
  VectorXd q;     ///< quadratures
};

struct Linearization {
  MatrixXd xdot;
  MatrixXd x;
  MatrixXd xa;
  MatrixXd forcing;  ///< tangent forcing P, only filled when requested
};

class DaeSystem {
 public:
  virtual ~DaeSystem() = default;

  virtual Index differential_size() const = 0;
  virtual Index algebraic_size() const = 0;
  virtual VectorXd residual(double t, const VectorXd& xdot, const VectorXd& x,
                            const VectorXd& xa) const = 0;
  virtual Linearization linearize(double t, const VectorXd& xdot, const VectorXd& x,
                                  const VectorXd& xa, bool with_forcing) const = 0;

  virtual Index tangent_columns() const { return 0; }
  virtual Index quadrature_size() const { return 0; }
  virtual VectorXd quadrature(const DaeState& stage) const;
};

struct StepAttempt {
  bool converged = false;
  DaeState end;
  double error = 0.0;  ///< weighted RMS norm of the local error estimate
  int newton_iterations = 0;
};

/// One TR-BDF2 step from a consistent state. A Newton failure is reported
/// through `converged == false`; a singular iteration matrix throws
/// HybridError(SingularIterationMatrix).
StepAttempt attempt_step(const DaeSystem& sys, const DaeState& start, double h,
                         const Tolerances& tol, bool error_on_quadratures = true);

/// Step-size factor from an error norm (0.9 err^-1/3, clamped to [0.2, 5]).
double step_factor(double error);

/// Advances from `start` to exactly `t_end` with error control and no event
/// handling. `observer` (may be empty) sees every accepted state. Returns the
/// final state; `h` carries the step size in and out (sign is ignored).
DaeState advance(const DaeSystem& sys, DaeState start, double t_end, const Tolerances& tol,
                 double& h, const std::function<void(const DaeState&)>& observer,
                 std::size_t max_steps = 1000000);

double weighted_rms(const VectorXd& err, const VectorXd& a, const VectorXd& b,
                    const Tolerances& tol);

}  // namespace hybridsens
