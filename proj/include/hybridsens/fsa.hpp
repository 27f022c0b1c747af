#pragma once

// Forward sensitivities: the linearized DAE, transition-time sensitivities,
// sensitivity jumps, and forward accumulation of dG/dp.

#include <cstddef>

#include "hybridsens/integrate.hpp"
#include "hybridsens/model.hpp"

namespace hybridsens {

struct SensitivityState {
  MatrixXd s;
  MatrixXd sd;
  MatrixXd w;
};

/// Residual of the sensitivity DAE, F_y' s' + F_y s + F_z w + F_p plus the
/// memory terms F_y* s* + F_z* w* (Index1Memory). For the split classes the
/// rows are those of [y' - f; k].
MatrixXd fsa_rhs(const ModeDynamics& dyn, const Point& pt, const VectorXd& p,
                 const SensitivityState& sens, const MatrixXd& sstar = {},
                 const MatrixXd& wstar = {});

/// Completes (s', w) from s at a point so that the sensitivity rows vanish.
/// `affine = false` drops the parameter and memory forcing (the linear part).
SensitivityState complete_sensitivity(const HybridSystemSpec& spec, std::size_t mode,
                                      const Point& pt, const VectorXd& p, const MatrixXd& s,
                                      const MatrixXd& sstar, const MatrixXd& wstar, bool affine);

/// Initial sensitivities: from differentiating the initial-condition map when
/// one is given, zero otherwise; s' and w follow from the sensitivity rows.
SensitivityState initial_sensitivities(const HybridSystemSpec& spec, const Point& initial,
                                       const VectorXd& p);

/// Transition-time sensitivity from the differentiated guard,
///   h_y'(s'+y''tau) + h_y(s+y'tau) + h_z(w+z'tau) + h_t tau + h_p = 0.
/// Throws HybridError(GrazingEvent) when the drift is (numerically) zero.
RowVectorXd transition_time_sensitivity(const GuardPartials& gp, const Point& before,
                                        const HiddenDerivatives& hd,
                                        const SensitivityState& sens, bool affine = true);

struct JumpResult {
  RowVectorXd tau;
  SensitivityState after;
};

/// Sensitivities after a transition. Columns are independent; with
/// `affine = false` the parameter forcing is dropped.
JumpResult fsa_jump(const HybridSystemSpec& spec, const TransitionRecord& rec,
                    const VectorXd& p, const SensitivityState& before, bool affine = true);

/// Forward run with sensitivities; fills dGdp, s0 and the per-transition jumps.
ForwardResult run_fsa(const HybridSystemSpec& spec, const VectorXd& p,
                      const Tolerances& tol = {});

}  // namespace hybridsens
