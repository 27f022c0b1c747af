// Command-line driver for the built-in problems.
//
//   hybridsens simulate --problem simple-hybrid --out traj.csv
//   hybridsens fsa      --problem em --out traj.csv --grad g.csv
//   hybridsens asa      --problem simple-hybrid --grad g.csv
//   hybridsens fd       --problem em --grad g.csv
//   hybridsens compare  --problem em
//
// Exit codes: 0 ok, 1 compare disagreement, 2 configuration error,
// 3 solver failure, 4 chattering limit, 5 singular transition.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hybridsens/hybridsens.hpp"

namespace hs = hybridsens;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string problem;
  std::vector<std::string> set;
  double t0 = std::numeric_limits<double>::quiet_NaN();
  double tf = std::numeric_limits<double>::quiet_NaN();
  double rtol = 1e-8;
  double atol = 1e-12;
  double eps = 1e-4;
  bool central = false;
  bool serial = false;
  std::string out;
  std::string transitions;
  std::string adjoint;
  std::string grad;
  std::string table_csv;
};

hs::Overrides parse_overrides(const RunConfig& cfg) {
  hs::Overrides ov;
  for (const auto& kv : cfg.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects name=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
      ov[key] = v;
    } catch (const std::exception&) {
      throw ConfigError("value for '" + key + "' is not a number: '" + val + "'");
    }
  }
  if (!std::isnan(cfg.t0)) ov["t0"] = cfg.t0;
  if (!std::isnan(cfg.tf)) ov["tf"] = cfg.tf;
  return ov;
}

hs::Tolerances tolerances(const RunConfig& cfg) {
  if (!(cfg.rtol > 0.0 && cfg.rtol <= 1e-2)) throw ConfigError("rtol must lie in (0, 1e-2]");
  if (!(cfg.atol > 0.0)) throw ConfigError("atol must be positive");
  return {cfg.rtol, cfg.atol};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  return f;
}

std::string sibling(const std::string& path, const std::string& name) {
  const std::filesystem::path p(path);
  return (p.parent_path() / name).string();
}

int exit_code(hs::ErrorKind k) {
  switch (k) {
    case hs::ErrorKind::UnknownProblem:
    case hs::ErrorKind::InvalidOverride:
    case hs::ErrorKind::InvalidConfiguration:
      return 2;
    case hs::ErrorKind::ChatteringLimit:
      return 4;
    case hs::ErrorKind::SingularTransition:
      return 5;
    default:
      return 3;
  }
}

void write_forward(const RunConfig& cfg, const hs::HybridSystemSpec& spec,
                   const hs::ForwardResult& fwd) {
  if (cfg.out.empty()) return;
  auto traj = open_out(cfg.out);
  hs::write_trajectory(traj, spec, fwd);
  const std::string tpath =
      cfg.transitions.empty() ? sibling(cfg.out, "transitions.csv") : cfg.transitions;
  auto tr = open_out(tpath);
  hs::write_transitions(tr, spec, fwd);
}

void write_grad(const RunConfig& cfg, const std::vector<hs::GradientReport>& reports) {
  if (cfg.grad.empty()) return;
  auto g = open_out(cfg.grad);
  hs::write_gradients(g, reports);
}

void print_report(const hs::GradientReport& r) {
  std::printf("%s G = %.10g  dG/dp =", r.method.c_str(), r.G);
  for (Eigen::Index k = 0; k < r.gradient.size(); ++k) std::printf(" %.10g", r.gradient(k));
  std::printf("  (%zu transitions, %.3f s)\n", r.transitions, r.wall_seconds);
}

int run(const std::string& cmd, const RunConfig& cfg) {
  const hs::Tolerances tol = tolerances(cfg);
  const hs::HybridSystemSpec spec = hs::build(cfg.problem, parse_overrides(cfg));
  const Eigen::VectorXd& p = spec.p_nominal;

  if (cmd == "simulate") {
    hs::ForwardOptions opt;
    opt.tol = tol;
    const hs::ForwardResult fwd = hs::simulate(spec, p, opt);
    write_forward(cfg, spec, fwd);
    std::printf("G = %.10g  (%zu transitions, %zu steps)\n", fwd.G, fwd.transitions.size(),
                fwd.accepted_steps);
    for (const auto& w : fwd.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return 0;
  }
  if (cmd == "fsa") {
    hs::GradientReport rep;
    const hs::ForwardResult fwd = hs::run_fsa(spec, p, tol);
    rep.method = "FSA";
    rep.G = fwd.G;
    rep.gradient = fwd.dGdp;
    rep.transitions = fwd.transitions.size();
    rep.tol = tol;
    write_forward(cfg, spec, fwd);
    write_grad(cfg, {rep});
    print_report(rep);
    return 0;
  }
  if (cmd == "asa") {
    hs::ForwardOptions opt;
    opt.tol = tol;
    const hs::ForwardResult fwd = hs::simulate(spec, p, opt);
    hs::AdjointOptions aopt;
    aopt.tol = tol;
    const hs::AdjointResult adj = hs::run_asa(spec, fwd, aopt);
    hs::GradientReport rep;
    rep.method = "ASA";
    rep.G = adj.G;
    rep.gradient = adj.dGdp;
    rep.transitions = fwd.transitions.size();
    rep.tol = tol;
    write_forward(cfg, spec, fwd);
    if (!cfg.adjoint.empty()) {
      auto a = open_out(cfg.adjoint);
      hs::write_adjoint(a, spec, adj);
    }
    write_grad(cfg, {rep});
    print_report(rep);
    return 0;
  }
  hs::FdOptions fo;
  fo.tol = tol;
  fo.eps = cfg.eps;
  fo.central = cfg.central;
  fo.parallel = !cfg.serial;
  if (!(fo.eps > 0.0)) throw ConfigError("eps must be positive");
  if (cmd == "fd") {
    const hs::GradientReport rep = hs::fd_gradient(spec, p, fo);
    write_grad(cfg, {rep});
    print_report(rep);
    for (std::size_t j = 0; j < rep.structural_change.size(); ++j) {
      if (rep.structural_change[j]) {
        std::fprintf(stderr, "warning: perturbing component %zu changed the transition count\n",
                     j + 1);
      }
    }
    return 0;
  }
  // compare
  const hs::Comparison c = hs::compare(spec, p, fo);
  std::cout << hs::format_table(c, spec.parameter_names);
  write_grad(cfg, c.reports);
  if (!cfg.table_csv.empty()) {
    auto t = open_out(cfg.table_csv);
    hs::write_gradients(t, c.reports);
  }
  return c.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis for hybrid DAE systems"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&cfg](CLI::App* sub) {
    sub->add_option("--problem", cfg.problem, "simple-hybrid, em or linear-hi2")->required();
    sub->add_option("--set", cfg.set, "parameter override name=value (repeatable)");
    sub->add_option("--t0", cfg.t0, "start time override");
    sub->add_option("--tf", cfg.tf, "final time override");
    sub->add_option("--rtol", cfg.rtol, "relative tolerance")->capture_default_str();
    sub->add_option("--atol", cfg.atol, "absolute tolerance")->capture_default_str();
  };
  auto* sim = app.add_subcommand("simulate", "state trajectory and transitions");
  auto* fsa = app.add_subcommand("fsa", "forward sensitivities");
  auto* asa = app.add_subcommand("asa", "adjoint gradient");
  auto* fd = app.add_subcommand("fd", "finite-difference gradient");
  auto* cmp = app.add_subcommand("compare", "FD, FSA and ASA side by side");
  for (auto* s : {sim, fsa, asa, fd, cmp}) common(s);
  for (auto* s : {sim, fsa, asa}) {
    s->add_option("--out", cfg.out, "trajectory CSV");
    s->add_option("--transitions", cfg.transitions, "transitions CSV (default: next to --out)");
  }
  asa->add_option("--adjoint", cfg.adjoint, "adjoint trajectory CSV");
  for (auto* s : {fsa, asa, fd, cmp}) s->add_option("--grad", cfg.grad, "gradient CSV");
  for (auto* s : {fd, cmp}) {
    s->add_option("--eps", cfg.eps, "relative FD perturbation")->capture_default_str();
    s->add_flag("--central", cfg.central, "central differences");
    s->add_flag("--serial", cfg.serial, "run perturbed simulations one at a time");
  }
  cmp->add_option("--csv", cfg.table_csv, "comparison table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run(cmd, cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const hs::HybridError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
