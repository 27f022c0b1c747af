#pragma once

// Adjoint sensitivities: backward integration of the adjoint DAE over the
// stored forward traces, terminal conditions, adjoint jumps, and gradient
// assembly. Only state traces are consumed, never forward sensitivities.

#include <cstddef>
#include <vector>

#include "hybridsens/integrate.hpp"
#include "hybridsens/model.hpp"

namespace hybridsens {

/// tau = alpha + beta s-, s+ = Gamma + Delta s- at one transition.
struct JumpLinearization {
  RowVectorXd alpha;  ///< 1 x N_p
  RowVectorXd beta;   ///< 1 x N_y
  MatrixXd Gamma;     ///< N_y x N_p
  MatrixXd Delta;     ///< N_y x N_y
};

/// Built from the sensitivity jump system: once with s- = 0 and the
/// parameter forcing on, once per unit vector of s- with the forcing off.
/// (s-', w-) are completed from s- through the sensitivity rows at t-, which
/// composes the hidden-derivative solve into the guard row.
JumpLinearization build_jump_linearization(const HybridSystemSpec& spec,
                                           const TransitionRecord& rec, const VectorXd& p,
                                           const MatrixXd& sstar_before = {},
                                           const MatrixXd& wstar_before = {});

/// Adjoint values at one time. FullyImplicit01 stores lambda (N_y+N_z) and
/// Lambda = F_y'^T lambda; the split classes store lambda (N_y) and mu (N_z).
struct AdjointValues {
  double t = 0.0;
  std::size_t mode = 0;
  VectorXd lambda;
  VectorXd mu;
  VectorXd Lambda;
};

/// Residual of the adjoint DAE at a forward point:
///   FullyImplicit01: [Lambda' - F_y^T lambda - g_y^T; F_y'^T lambda - Lambda; F_z^T lambda + g_z^T]
///   split classes:   [lambda' + f_y^T lambda + k_y^T mu + g_y^T; f_z^T lambda + k_z^T mu + g_z^T]
/// `xdot` is Lambda' (class 01) or lambda'.
VectorXd adjoint_rhs(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                     const VectorXd& p, const AdjointValues& adj, const VectorXd& xdot);

/// Algebraic adjoint constraint lambda^T F_z + g_z (class 01) or
/// lambda^T f_z + mu^T k_z + g_z (split classes).
VectorXd adjoint_algebraic_residual(const HybridSystemSpec& spec, std::size_t mode,
                                    const Point& pt, const VectorXd& p, const AdjointValues& adj);

struct TerminalConditions {
  AdjointValues values;
  RowVectorXd increment;  ///< gradient term at t_f (Hessenberg2 only)
};

TerminalConditions adjoint_final_conditions(const HybridSystemSpec& spec,
                                            const ForwardResult& fwd);

/// Normalized algebraic partials phi = -k_z^-1 [k_y, k_y*, k_z*, k_p] at t- of
/// a transition (Index1Memory), so that w = phi_y s + phi_y* s* + phi_z* w* + phi_p.
struct MemoryTransfer {
  MatrixXd phi_y, phi_ystar, phi_zstar, phi_p;
};

MemoryTransfer memory_transfer(const HybridSystemSpec& spec, const TransitionRecord& rec,
                               const VectorXd& p);

struct AdjointJumpRecord {
  std::size_t index = 0;
  double t = 0.0;
  AdjointValues plus;
  AdjointValues minus;
  RowVectorXd increment;
  RowVectorXd acc_A, acc_B;  ///< accumulators after the transfer (Index1Memory)
};

struct AdjointOptions {
  Tolerances tol;
  bool store_trajectory = true;
};

struct AdjointResult {
  double G = 0.0;
  RowVectorXd dGdp;
  std::vector<AdjointValues> trajectory;  ///< accepted backward states, in backward order
  std::vector<AdjointJumpRecord> jumps;   ///< in backward order
  double max_algebraic_residual = 0.0;
  std::size_t steps = 0;
};

/// Backward pass over a completed forward run.
AdjointResult run_asa(const HybridSystemSpec& spec, const ForwardResult& fwd,
                      const AdjointOptions& options = {});

}  // namespace hybridsens
