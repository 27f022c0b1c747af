#pragma once

// Finite-difference gradient oracle and FD / FSA / ASA comparison.

#include <cstddef>
#include <string>
#include <vector>

#include "hybridsens/model.hpp"
#include "hybridsens/sdirk.hpp"

namespace hybridsens {

struct GradientReport {
  std::string method;  ///< "FD", "FSA" or "ASA"
  double G = 0.0;
  RowVectorXd gradient;
  std::size_t transitions = 0;
  Tolerances tol;
  double wall_seconds = 0.0;
  /// FD only: components whose perturbed run changed the transition count.
  std::vector<bool> structural_change;
};

struct FdOptions {
  Tolerances tol;
  double eps = 1e-4;  ///< relative perturbation
  bool central = false;
  bool parallel = true;
};

/// Component j = (G(p + e_j d_j) - G(p)) / d_j with d_j = eps max(1, |p_j|),
/// or the central quotient when requested.
GradientReport fd_gradient(const HybridSystemSpec& spec, const VectorXd& p,
                           const FdOptions& options = {});

GradientReport fsa_gradient(const HybridSystemSpec& spec, const VectorXd& p,
                            const Tolerances& tol = {});

GradientReport asa_gradient(const HybridSystemSpec& spec, const VectorXd& p,
                            const Tolerances& tol = {});

struct Comparison {
  std::vector<GradientReport> reports;  ///< FD, FSA, ASA
  RowVectorXd max_abs_deviation;        ///< largest pairwise difference per component
  RowVectorXd max_rel_deviation;
  bool passed = false;
};

/// Runs all three methods (concurrently when `options.parallel`). A component
/// passes when every pairwise difference is at most max(1e-3, 10 eps |FSA_j|);
/// FD components flagged for a structural change are skipped.
Comparison compare(const HybridSystemSpec& spec, const VectorXd& p, const FdOptions& options = {});

/// Aligned text table, one row per method.
std::string format_table(const Comparison& c, const std::vector<std::string>& parameter_names);

}  // namespace hybridsens
