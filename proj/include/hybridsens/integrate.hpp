#pragma once

// Forward simulation of a hybrid system: adaptive stepping inside a mode,
// guard monitoring, event location, and consistent reinitialization.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hybridsens/model.hpp"
#include "hybridsens/sdirk.hpp"

namespace hybridsens {

/// One accepted step with its dense output (cubic Hermite on y and s,
/// linear on z and w).
struct StepRecord {
  double t_left = 0.0;
  double t_right = 0.0;
  VectorXd y_left, yd_left, z_left;
  VectorXd y_right, yd_right, z_right;
  MatrixXd s_left, sd_left, w_left;  ///< empty unless sensitivities are on
  MatrixXd s_right, sd_right, w_right;

  VectorXd y(double t) const;
  VectorXd yd(double t) const;
  VectorXd z(double t) const;
  MatrixXd s(double t) const;
  MatrixXd w(double t) const;
};

struct TransitionRecord {
  std::size_t index = 0;  ///< 1-based transition counter
  double t = 0.0;
  std::size_t mode_before = 0;
  std::size_t mode_after = 0;
  Point before;  ///< memory fields hold the memory of mode_before
  Point after;   ///< memory fields hold the memory of mode_after
  double guard_value = 0.0;
  double drift = 0.0;
  double consistency_residual = 0.0;
};

/// Forward sensitivities on both sides of a transition.
struct SensitivityJump {
  RowVectorXd tau;
  MatrixXd s_before, sd_before, w_before;
  MatrixXd s_after, sd_after, w_after;
};

struct ModeTrace {
  std::size_t mode = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  VectorXd ystar;  ///< memory of this mode (Index1Memory), empty otherwise
  VectorXd zstar;
  std::vector<StepRecord> steps;
  bool ends_in_transition = false;

  /// Dense-output point at t (clamped to the mode interval). Memory fields
  /// are filled from the trace.
  Point at(double t) const;
  const StepRecord& step_at(double t) const;
};

/// Per-mode context for the state DAE.
struct ModeContext {
  VectorXd p;
  VectorXd ystar, zstar;  ///< memory (Index1Memory)
  MatrixXd sstar, wstar;  ///< memory sensitivities
  bool sensitivities = false;
};

/// The state DAE of one mode (with optional forward-sensitivity tangents and
/// the quadratures [G] or [G, dG/dp]) as seen by the stepper.
class ModeSystem final : public DaeSystem {
 public:
  ModeSystem(const HybridSystemSpec& spec, std::size_t mode, const ModeContext& ctx);

  Index differential_size() const override { return spec_.n_y; }
  Index algebraic_size() const override { return spec_.n_z; }
  VectorXd residual(double t, const VectorXd& xdot, const VectorXd& x,
                    const VectorXd& xa) const override;
  Linearization linearize(double t, const VectorXd& xdot, const VectorXd& x, const VectorXd& xa,
                          bool with_forcing) const override;
  Index tangent_columns() const override;
  Index quadrature_size() const override;
  VectorXd quadrature(const DaeState& stage) const override;

  Point point(double t, const VectorXd& xdot, const VectorXd& x, const VectorXd& xa) const;
  Point point(const DaeState& s) const { return point(s.t, s.xdot, s.x, s.xa); }
  double guard(const DaeState& s) const;

 private:
  const HybridSystemSpec& spec_;
  std::size_t mode_;
  const ModeContext& ctx_;
};

struct ForwardOptions {
  Tolerances tol;
  bool sensitivities = false;
  std::size_t max_transitions = 10000;
  std::size_t max_steps = 2000000;
  bool store_steps = true;
};

struct ForwardResult {
  VectorXd p;
  Tolerances tol;
  std::vector<ModeTrace> traces;
  std::vector<TransitionRecord> transitions;
  Point initial;
  std::size_t initial_mode = 0;
  double G = 0.0;
  RowVectorXd dGdp;                    ///< forward sensitivity runs only
  MatrixXd s0, sd0, w0;                ///< initial sensitivities (when computed)
  std::vector<SensitivityJump> jumps;  ///< one per transition (sensitivity runs)
  std::vector<std::string> warnings;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  double max_consistency_residual = 0.0;
};

/// One step of the state DAE of `mode` from a consistent state.
StepAttempt step(const HybridSystemSpec& spec, std::size_t mode, const ModeContext& ctx,
                 const DaeState& state, double dt, const Tolerances& tol);

struct ModeRun {
  ModeTrace trace;
  DaeState final_state;
  bool event = false;
};

/// Integrates one mode from a consistent state until its guard fires or
/// t_stop is reached. `h` carries the step size in and out.
ModeRun integrate_mode(const HybridSystemSpec& spec, std::size_t mode, const ModeContext& ctx,
                       const DaeState& start, double t_stop, const Tolerances& tol, double& h,
                       std::vector<std::string>* warnings = nullptr,
                       std::size_t max_steps = 2000000, std::size_t* accepted = nullptr,
                       std::size_t* rejected = nullptr);

/// Event tolerances.
double event_tolerance_h(double h_scale);
inline constexpr double kEventTolT = 1e-12;

/// Refines a bracketed sign change of `h` on [a, b] (h(a) and h(b) of
/// opposite sign, or h(b) already within eps_h) by Illinois-modified regula
/// falsi with bisection safeguards. Returns the bracket end with the smaller
/// |h|. Throws HybridError(NoSignChange) if the bracket is invalid.
double refine_root(const std::function<double(double)>& h, double a, double b, double ha,
                   double hb, double eps_h, double eps_t);

struct EventLocation {
  double t = 0.0;
  bool multiple_crossings = false;
};

/// Locates the leftmost guard crossing on a step using its dense output.
EventLocation locate_event(const StepRecord& step, const HybridSystemSpec& spec, std::size_t mode,
                           const ModeContext& ctx, double eps_h, double eps_t = kEventTolT);

/// Consistent state at t0 for the initial mode (memory of the initial mode is
/// set to the initial state for Index1Memory).
Point consistent_initial_state(const HybridSystemSpec& spec, const VectorXd& p);

/// Consistent state after transition `before` -> `mode_after` at before.t.
/// Memory fields of the result are set for mode_after.
Point consistent_init(const HybridSystemSpec& spec, std::size_t mode_before,
                      std::size_t mode_after, const Point& before, const VectorXd& p);

/// Full residual norm at a point (including the hidden constraint for
/// Hessenberg2).
double consistency_residual(const HybridSystemSpec& spec, std::size_t mode, const Point& pt,
                            const VectorXd& p);

/// Plain forward run (no sensitivities unless options say so).
ForwardResult simulate(const HybridSystemSpec& spec, const VectorXd& p,
                       const ForwardOptions& options = {});

}  // namespace hybridsens
