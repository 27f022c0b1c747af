#pragma once

// Hessenberg index-2 specifics: staged consistent initialization and
// transitions through the hidden constraint C f + k_t = 0, the hidden
// algebraic sensitivity, and the adjoint boundary constructions.

#include <cstddef>

#include "hybridsens/integrate.hpp"
#include "hybridsens/model.hpp"

namespace hybridsens {

/// A = f_y, B = f_z, C = k_y and friends at one point, with (CB)^-1.
struct Hi2Workspace {
  MatrixXd A, B, C;
  MatrixXd f_p, k_p;
  VectorXd f_t, k_t;
  MatrixXd cb_inv;

  /// Throws HybridError(SingularMatrix) if CB is singular.
  static Hi2Workspace at(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                         const VectorXd& p);
};

/// Hidden-constraint residual C y' + k_t.
VectorXd hi2_hidden_residual(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                             const VectorXd& p);

/// Consistent (y0, z0, y'0): y0 from {T0, k}, z0 from C f + k_t = 0,
/// y'0 = f.
Point hi2_initialize(const HybridSystemSpec& spec, const VectorXd& p);

/// Staged transition: y+ from {T, k}, z+ from the hidden constraint, y'+ = f.
/// Throws HybridError(SingularTransition) when [T_y+; C] or CB is singular.
Point hi2_transition(const HybridSystemSpec& spec, std::size_t mode_before,
                     std::size_t mode_after, const Point& before, const VectorXd& p);

/// Puts an accepted state back on the hidden constraint: z from
/// C f + k_t = 0 and y' = f. When `s` is non-empty, w follows from the hidden
/// sensitivity and s' = A s + B w + f_p.
void hi2_project(const HybridSystemSpec& spec, std::size_t mode, const VectorXd& p, Point& pt,
                 const MatrixXd& s, MatrixXd& sd, MatrixXd& w);

/// Algebraic sensitivity from the differentiated hidden constraint,
///   CB w = -(C A s + C' s + C f_p + k_p'),
/// with C' and k_p' taken by central differences along (y', 1).
/// `affine = false` drops the parameter terms.
MatrixXd hi2_hidden_sensitivity(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                                const VectorXd& p, const MatrixXd& s, bool affine = true);

/// Consistent mu for a given lambda:
///   mu^T = (lambda^T (B' - A B) + g_z' - g_y B) (CB)^-1,
/// with B' and g_z' by finite differences along the stored trajectory.
VectorXd hi2_adjoint_mu(const HybridSystemSpec& spec, const ModeTrace& trace, double t,
                        const VectorXd& lambda, const VectorXd& p);

struct Hi2Boundary {
  VectorXd lambda;
  VectorXd mu;
  RowVectorXd increment;
};

/// Terminal values: lambda_f^T = -g_z (CB)^-1 C, mu_f from hi2_adjoint_mu,
/// and the gradient term -g_z (CB)^-1 k_p.
Hi2Boundary hi2_terminal(const HybridSystemSpec& spec, const ModeTrace& last,
                         const VectorXd& p);

/// Jump at a transition given X = (g- - g+) beta^T + Delta^T lambda+:
///   lambda-^T = X^T - (g_z + X^T B)(CB)^-1 C,
/// increment -(g_z + X^T B)(CB)^-1 k_p (all at t-, mode before). mu- is
/// re-solved from hi2_adjoint_mu on the preceding trace.
Hi2Boundary hi2_jump(const HybridSystemSpec& spec, const ModeTrace& before_trace,
                     const TransitionRecord& rec, const VectorXd& X, const VectorXd& p);

}  // namespace hybridsens
