#pragma once

// CSV artifacts. Numbers are written with 17 significant digits so that
// reading a file back reproduces the stored doubles exactly.

#include <iosfwd>
#include <string>
#include <vector>

#include "hybridsens/asa.hpp"
#include "hybridsens/integrate.hpp"
#include "hybridsens/verify.hpp"

namespace hybridsens {

std::string format_number(double v);

/// t, states, algebraics (+ s_j_k, w_j_k when the run carried sensitivities).
/// One row per stored step endpoint; a transition appears as two rows with
/// the same t (before and after).
void write_trajectory(std::ostream& os, const HybridSystemSpec& spec, const ForwardResult& fwd);

/// i, t_i, mode_from, mode_to (+ tau_1..tau_Np for sensitivity runs).
void write_transitions(std::ostream& os, const HybridSystemSpec& spec, const ForwardResult& fwd);

/// t, mode, lambda_1.. (and mu_1.. for the split classes), in backward order.
void write_adjoint(std::ostream& os, const HybridSystemSpec& spec, const AdjointResult& adj);

/// method, G, dGdp_1..dGdp_Np; one row per report.
void write_gradients(std::ostream& os, const std::vector<GradientReport>& reports);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a purely numeric CSV with a header row; non-numeric cells are NaN.
CsvTable read_csv(std::istream& is);

}  // namespace hybridsens
