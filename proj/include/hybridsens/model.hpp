#pragma once

// Problem-description data model for hybrid discrete/continuous systems.
//
// Every mode is described by a single residual F(y', y, z, y*, z*, p, t) with
// N_y + N_z rows. For the split classes (Hessenberg2, Index1Memory) the
// residual must be written as [y' - f; k], i.e. the first N_y rows have an
// identity y'-Jacobian and the last N_z rows do not depend on y'. The
// memory arguments y*, z* are ignored unless the class is Index1Memory.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hybridsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class DaeClass { FullyImplicit01, Hessenberg2, Index1Memory };

std::string_view to_string(DaeClass c) noexcept;

/// A full evaluation point: time, differential state and derivative,
/// algebraic state, and the memory states frozen at the last mode entry.
struct Point {
  double t = 0.0;
  VectorXd yd;
  VectorXd y;
  VectorXd z;
  VectorXd ystar;
  VectorXd zstar;
};

/// Partials of a mode residual. Every block has N_y + N_z rows.
struct JacobianSet {
  MatrixXd yd;
  MatrixXd y;
  MatrixXd z;
  MatrixXd ystar;
  MatrixXd zstar;
  MatrixXd p;
  VectorXd t;
};

using ResidualFn = std::function<VectorXd(const Point&, const VectorXd& p)>;
using JacobianFn = std::function<JacobianSet(const Point&, const VectorXd& p)>;

struct ModeDynamics {
  ResidualFn residual;
  JacobianFn jacobian;  ///< optional; central differences otherwise
};

struct GuardPartials {
  RowVectorXd yd;
  RowVectorXd y;
  RowVectorXd z;
  RowVectorXd p;
  double t = 0.0;
};

/// Scalar transition condition. A transition fires at a sign change of h.
struct TransitionGuard {
  std::function<double(const Point&, const VectorXd& p)> h;
  std::function<GuardPartials(const Point&, const VectorXd& p)> partials;  ///< optional
};

struct MapPartials {
  MatrixXd yd_after;
  MatrixXd y_after;
  MatrixXd z_after;
  MatrixXd yd_before;
  MatrixXd y_before;
  MatrixXd z_before;
  MatrixXd p;
  VectorXd t;
};

/// Transition function T(after, before, p, t) = 0 mapping the state before a
/// switch to the state after it. For an initial-condition map the "before"
/// point is empty.
struct TransitionMap {
  Index rows = 0;
  std::function<VectorXd(const Point& after, const Point& before, const VectorXd& p)> T;
  std::function<MapPartials(const Point& after, const Point& before, const VectorXd& p)>
      partials;  ///< optional
};

struct IntegrandPartials {
  RowVectorXd y;
  RowVectorXd z;
  RowVectorXd p;
  double t = 0.0;
};

/// Integrand g(y, z, p, t) of the functional G(p) = int g dt.
struct QuadratureSpec {
  std::function<double(const Point&, const VectorXd& p)> g;
  std::function<IntegrandPartials(const Point&, const VectorXd& p)> partials;  ///< optional
};

struct Mode {
  std::string name;
  ModeDynamics dynamics;
  TransitionGuard guard;
  TransitionMap exit_map;                   ///< applied when leaving this mode
  std::optional<QuadratureSpec> integrand;  ///< overrides the system-wide integrand
};

/// Initial conditions: either an implicit map T0(y', y, z, p, t0) = 0 solved
/// together with the first mode's residual, or explicit values. Explicit
/// values double as Newton guesses when a map is present.
struct InitialCondition {
  std::optional<TransitionMap> map;
  VectorXd y0;
  VectorXd z0;
  VectorXd yd0;
};

using NextModeFn =
    std::function<std::size_t(std::size_t from, const Point& before, const VectorXd& p)>;

struct HybridSystemSpec {
  std::string name;
  DaeClass dae_class = DaeClass::FullyImplicit01;
  Index n_y = 0;
  Index n_z = 0;
  std::vector<Mode> modes;
  std::size_t initial_mode = 0;
  NextModeFn next_mode;  ///< optional; cyclic order when empty
  InitialCondition initial;
  QuadratureSpec integrand;
  VectorXd p_nominal;
  double t0 = 0.0;
  double tf = 1.0;
  std::vector<std::string> state_names;
  std::vector<std::string> algebraic_names;
  std::vector<std::string> parameter_names;

  Index n_p() const { return p_nominal.size(); }
  Index n_x() const { return n_y + n_z; }
  const QuadratureSpec& integrand_for(std::size_t mode) const;
  std::size_t successor(std::size_t from, const Point& before, const VectorXd& p) const;
};

/// Checks structural consistency (sizes, required evaluators, t0 < tf).
/// Throws HybridError(InvalidConfiguration).
void check_structure(const HybridSystemSpec& spec);

// ---------------------------------------------------------------------------
// Evaluation with finite-difference fallback.

/// Central-difference step used for every finite-difference partial.
double fd_step(double x) noexcept;

VectorXd eval_residual(const ModeDynamics& dyn, const Point& pt, const VectorXd& p);
JacobianSet eval_jacobians(const ModeDynamics& dyn, const Point& pt, const VectorXd& p);
JacobianSet fd_jacobians(const ModeDynamics& dyn, const Point& pt, const VectorXd& p);

double eval_guard(const TransitionGuard& guard, const Point& pt, const VectorXd& p);
GuardPartials eval_guard_partials(const TransitionGuard& guard, const Point& pt,
                                  const VectorXd& p);

VectorXd eval_map(const TransitionMap& map, const Point& after, const Point& before,
                  const VectorXd& p);
MapPartials eval_map_partials(const TransitionMap& map, const Point& after, const Point& before,
                              const VectorXd& p);

double eval_integrand(const QuadratureSpec& q, const Point& pt, const VectorXd& p);
IntegrandPartials eval_integrand_partials(const QuadratureSpec& q, const Point& pt,
                                          const VectorXd& p);

// ---------------------------------------------------------------------------
// Split-form views (Hessenberg2 and Index1Memory).

/// f, k and their partials extracted from a residual written as [y' - f; k].
struct SplitJacobians {
  MatrixXd f_y, f_z, f_ystar, f_zstar, f_p;
  VectorXd f_t;
  MatrixXd k_y, k_z, k_ystar, k_zstar, k_p;
  VectorXd k_t;
};

SplitJacobians split(const JacobianSet& jac, Index n_y);

/// Differential right-hand side f at a point (the value of y' that zeroes the
/// first N_y residual rows).
VectorXd split_rhs(const ModeDynamics& dyn, const Point& pt, const VectorXd& p, Index n_y);

// ---------------------------------------------------------------------------
// Hidden derivatives and validation.

struct HiddenDerivatives {
  VectorXd ydd;  ///< second derivative of y
  VectorXd zd;   ///< first derivative of z
};

/// Solves the time-differentiated DAE for (y'', z'). Uses [F_y' | F_z] for
/// FullyImplicit01 and Index1Memory; Hessenberg2 points differentiate the
/// hidden constraint instead. Throws HybridError(SingularMatrix).
HiddenDerivatives compute_hidden_derivatives(const HybridSystemSpec& spec, std::size_t mode,
                                             const Point& pt, const VectorXd& p);

/// Guard drift h_y' y'' + h_y y' + h_z z' + h_t at a point.
double guard_drift(const GuardPartials& gp, const Point& pt, const HiddenDerivatives& hd);

struct ProbePoint {
  std::size_t mode = 0;
  Point point;
};

struct Finding {
  std::size_t probe = 0;
  std::size_t mode = 0;
  std::string check;
  double value = 0.0;  ///< smallest singular value, or drift magnitude
  bool ok = true;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const;
};

/// Reports solvability-matrix singular values and guard drifts at each probe
/// point. Never mutates the spec; singular findings are reported, not thrown.
/// Throws HybridError(EvaluationFailure) when a user evaluator fails.
ValidationReport validate_spec(const HybridSystemSpec& spec, const std::vector<ProbePoint>& probes,
                               const VectorXd& p);

/// Smallest singular value of a matrix (0 if empty).
double smallest_singular_value(const MatrixXd& m);

}  // namespace hybridsens
