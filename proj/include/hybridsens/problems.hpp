#pragma once

// Built-in benchmark problems.
//
//   simple-hybrid  scalar ODE switching between x' = 4 - x and x' = 10 - 2x
//                  on the sign of x^3 - 5x^2 + 7x - p, G = int_0^5 x dt
//   em             one degree-of-freedom oscillator with an exponential-model
//                  hysteretic stress (Index1Memory), G = int_0^10 u^2 dt
//   linear-hi2     small Hessenberg index-2 system with a closed-form solution

#include <map>
#include <string>
#include <vector>

#include "hybridsens/model.hpp"

namespace hybridsens {

using Overrides = std::map<std::string, double>;

/// Problem ids accepted by build().
std::vector<std::string> problem_names();

/// Builds a problem. Overrides may name any parameter of the problem, or
/// "t0" / "tf"; "load_sign" (+1/-1) flips the EM load, "integrand" (0, 1, 2)
/// picks the linear-hi2 functional. Throws UnknownProblem / InvalidOverride.
HybridSystemSpec build(const std::string& name, const Overrides& overrides = {});

/// EM internal constants.
struct EmConstants {
  double u0 = 0.0;
  double fbar = 0.0;
};

/// u0 = -ln(delta / (k_a - k_b)) / (2 alpha), fbar = (k_a - k_b)(1 - e^{-2 alpha u0}) / (2 alpha).
EmConstants em_constants(const VectorXd& p);

/// Derived memory displacement u*_i of a mode with direction xi entered at
/// (u*, z*). Throws DomainError when the log argument is not positive.
double em_memory_update(double ustar, double zstar, double xi, const VectorXd& p);

/// EM stress sigma(u; u*, z*, xi, p).
double em_stress(double u, double ustar, double zstar, double xi, const VectorXd& p);

/// sigma and its partials: [sigma_u, sigma_u*, sigma_z*, sigma_p (4)].
struct EmStressPartials {
  double value = 0.0;
  double u = 0.0;
  double ustar = 0.0;
  double zstar = 0.0;
  RowVectorXd p;
};

EmStressPartials em_stress_partials(double u, double ustar, double zstar, double xi,
                                    const VectorXd& p);

/// Closed-form linear-hi2 trajectory: y1 = sin t, y2 = cos t - 1 + a (+ c
/// after t_s), z = 1 - a - p1 (- c after t_s).
struct LinearHi2Exact {
  double y1, y2, z;
};
LinearHi2Exact linear_hi2_exact(double t, const VectorXd& p);

}  // namespace hybridsens
