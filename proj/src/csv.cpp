#include "hybridsens/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace hybridsens {

namespace {

std::string name_or(const std::vector<std::string>& names, Index i, const char* prefix) {
  const auto iu = static_cast<std::size_t>(i);
  if (iu < names.size() && !names[iu].empty()) return names[iu];
  return std::string(prefix) + std::to_string(i + 1);
}

void write_row(std::ostream& os, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << format_number(v[i]);
  }
  os << '\n';
}

void write_header(std::ostream& os, const std::vector<std::string>& h) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) os << ',';
    os << h[i];
  }
  os << '\n';
}

void append(std::vector<double>& row, const VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) row.push_back(v(i));
}

// Row-major over (state j, parameter k).
void append(std::vector<double>& row, const MatrixXd& m) {
  for (Index j = 0; j < m.rows(); ++j)
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(j, k));
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectory(std::ostream& os, const HybridSystemSpec& spec, const ForwardResult& fwd) {
  bool sens = false;
  for (const auto& tr : fwd.traces)
    if (!tr.steps.empty() && tr.steps.front().s_left.size()) sens = true;
  const Index np = spec.n_p();

  std::vector<std::string> h{"t"};
  for (Index i = 0; i < spec.n_y; ++i) h.push_back(name_or(spec.state_names, i, "y_"));
  for (Index i = 0; i < spec.n_z; ++i) h.push_back(name_or(spec.algebraic_names, i, "z_"));
  if (sens) {
    for (Index j = 0; j < spec.n_y; ++j)
      for (Index k = 0; k < np; ++k)
        h.push_back("s_" + std::to_string(j + 1) + "_" + std::to_string(k + 1));
    for (Index j = 0; j < spec.n_z; ++j)
      for (Index k = 0; k < np; ++k)
        h.push_back("w_" + std::to_string(j + 1) + "_" + std::to_string(k + 1));
  }
  write_header(os, h);

  for (const auto& tr : fwd.traces) {
    if (tr.steps.empty()) continue;
    const StepRecord& first = tr.steps.front();
    std::vector<double> row{first.t_left};
    append(row, first.y_left);
    append(row, first.z_left);
    if (sens) {
      append(row, first.s_left);
      append(row, first.w_left);
    }
    write_row(os, row);
    for (const auto& st : tr.steps) {
      row = {st.t_right};
      append(row, st.y_right);
      append(row, st.z_right);
      if (sens) {
        append(row, st.s_right);
        append(row, st.w_right);
      }
      write_row(os, row);
    }
  }
}

void write_transitions(std::ostream& os, const HybridSystemSpec& spec, const ForwardResult& fwd) {
  const bool sens = !fwd.jumps.empty();
  std::vector<std::string> h{"i", "t_i", "mode_from", "mode_to"};
  if (sens)
    for (Index k = 0; k < spec.n_p(); ++k) h.push_back("tau_" + std::to_string(k + 1));
  write_header(os, h);
  for (std::size_t i = 0; i < fwd.transitions.size(); ++i) {
    const auto& rec = fwd.transitions[i];
    os << rec.index << ',' << format_number(rec.t) << ',' << rec.mode_before << ','
       << rec.mode_after;
    if (sens) {
      const RowVectorXd& tau = fwd.jumps[i].tau;
      for (Index k = 0; k < tau.size(); ++k) os << ',' << format_number(tau(k));
    }
    os << '\n';
  }
}

void write_adjoint(std::ostream& os, const HybridSystemSpec& spec, const AdjointResult& adj) {
  const bool split = spec.dae_class != DaeClass::FullyImplicit01;
  const Index nl = split ? spec.n_y : spec.n_x();
  std::vector<std::string> h{"t", "mode"};
  for (Index i = 0; i < nl; ++i) h.push_back("lambda_" + std::to_string(i + 1));
  if (split)
    for (Index i = 0; i < spec.n_z; ++i) h.push_back("mu_" + std::to_string(i + 1));
  write_header(os, h);
  for (const auto& v : adj.trajectory) {
    std::vector<double> row{v.t, static_cast<double>(v.mode)};
    append(row, v.lambda);
    if (split) append(row, v.mu);
    write_row(os, row);
  }
}

void write_gradients(std::ostream& os, const std::vector<GradientReport>& reports) {
  Index np = 0;
  for (const auto& r : reports) np = std::max<Index>(np, r.gradient.size());
  std::vector<std::string> h{"method", "G"};
  for (Index k = 0; k < np; ++k) h.push_back("dGdp_" + std::to_string(k + 1));
  write_header(os, h);
  for (const auto& r : reports) {
    os << r.method << ',' << format_number(r.G);
    for (Index k = 0; k < r.gradient.size(); ++k) os << ',' << format_number(r.gradient(k));
    os << '\n';
  }
}

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(is, line)) return t;
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) {
      double v = std::numeric_limits<double>::quiet_NaN();
      const char* b = cell.data();
      const char* e = b + cell.size();
      double parsed = 0.0;
      const auto res = std::from_chars(b, e, parsed);
      if (res.ec == std::errc() && res.ptr == e) v = parsed;
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace hybridsens
