#include "hybridsens/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "hybridsens/asa.hpp"
#include "hybridsens/fsa.hpp"
#include "hybridsens/integrate.hpp"

namespace hybridsens {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Sample {
  double G = 0.0;
  std::size_t transitions = 0;
};

Sample plain_run(const HybridSystemSpec& spec, const VectorXd& p, const Tolerances& tol) {
  ForwardOptions opt;
  opt.tol = tol;
  opt.store_steps = false;
  const ForwardResult r = simulate(spec, p, opt);
  return {r.G, r.transitions.size()};
}

}  // namespace

GradientReport fd_gradient(const HybridSystemSpec& spec, const VectorXd& p,
                           const FdOptions& options) {
  const auto start = Clock::now();
  const Index np = p.size();
  std::vector<VectorXd> points;
  points.push_back(p);
  std::vector<double> steps(static_cast<std::size_t>(np));
  for (Index j = 0; j < np; ++j) {
    const double d = options.eps * std::max(1.0, std::abs(p(j)));
    steps[static_cast<std::size_t>(j)] = d;
    VectorXd q = p;
    q(j) += d;
    points.push_back(q);
    if (options.central) {
      q(j) = p(j) - d;
      points.push_back(q);
    }
  }

  std::vector<Sample> samples(points.size());
  if (options.parallel) {
    std::vector<std::future<Sample>> futures;
    for (const auto& q : points) {
      futures.push_back(std::async(std::launch::async,
                                   [&spec, q, &options] { return plain_run(spec, q, options.tol); }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) samples[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) samples[i] = plain_run(spec, points[i], options.tol);
  }

  GradientReport rep;
  rep.method = "FD";
  rep.G = samples[0].G;
  rep.transitions = samples[0].transitions;
  rep.tol = options.tol;
  rep.gradient = RowVectorXd::Zero(np);
  rep.structural_change.assign(static_cast<std::size_t>(np), false);
  const std::size_t stride = options.central ? 2 : 1;
  for (Index j = 0; j < np; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const Sample& plus = samples[1 + stride * ju];
    bool changed = plus.transitions != rep.transitions;
    if (options.central) {
      const Sample& minus = samples[2 + stride * ju];
      changed = changed || minus.transitions != rep.transitions;
      rep.gradient(j) = (plus.G - minus.G) / (2.0 * steps[ju]);
    } else {
      rep.gradient(j) = (plus.G - rep.G) / steps[ju];
    }
    rep.structural_change[ju] = changed;
  }
  rep.wall_seconds = seconds_since(start);
  return rep;
}

GradientReport fsa_gradient(const HybridSystemSpec& spec, const VectorXd& p,
                            const Tolerances& tol) {
  const auto start = Clock::now();
  const ForwardResult r = run_fsa(spec, p, tol);
  GradientReport rep;
  rep.method = "FSA";
  rep.G = r.G;
  rep.gradient = r.dGdp;
  rep.transitions = r.transitions.size();
  rep.tol = tol;
  rep.wall_seconds = seconds_since(start);
  return rep;
}

GradientReport asa_gradient(const HybridSystemSpec& spec, const VectorXd& p,
                            const Tolerances& tol) {
  const auto start = Clock::now();
  ForwardOptions opt;
  opt.tol = tol;
  const ForwardResult fwd = simulate(spec, p, opt);
  AdjointOptions aopt;
  aopt.tol = tol;
  aopt.store_trajectory = false;
  const AdjointResult a = run_asa(spec, fwd, aopt);
  GradientReport rep;
  rep.method = "ASA";
  rep.G = a.G;
  rep.gradient = a.dGdp;
  rep.transitions = fwd.transitions.size();
  rep.tol = tol;
  rep.wall_seconds = seconds_since(start);
  return rep;
}

Comparison compare(const HybridSystemSpec& spec, const VectorXd& p, const FdOptions& options) {
  Comparison c;
  if (options.parallel) {
    auto fd = std::async(std::launch::async, [&] { return fd_gradient(spec, p, options); });
    auto fsa = std::async(std::launch::async, [&] { return fsa_gradient(spec, p, options.tol); });
    auto asa = std::async(std::launch::async, [&] { return asa_gradient(spec, p, options.tol); });
    c.reports = {fd.get(), fsa.get(), asa.get()};
  } else {
    c.reports = {fd_gradient(spec, p, options), fsa_gradient(spec, p, options.tol),
                 asa_gradient(spec, p, options.tol)};
  }
  const Index np = p.size();
  const RowVectorXd& ref = c.reports[1].gradient;
  c.max_abs_deviation = RowVectorXd::Zero(np);
  c.max_rel_deviation = RowVectorXd::Zero(np);
  c.passed = true;
  for (Index j = 0; j < np; ++j) {
    const double band = std::max(1e-3, 10.0 * options.eps * std::abs(ref(j)));
    for (std::size_t a = 0; a < c.reports.size(); ++a) {
      for (std::size_t b = a + 1; b < c.reports.size(); ++b) {
        const bool skip = (a == 0 && c.reports[0].structural_change[static_cast<std::size_t>(j)]);
        const double dev = std::abs(c.reports[a].gradient(j) - c.reports[b].gradient(j));
        const double scale = std::max(std::abs(c.reports[a].gradient(j)),
                                      std::abs(c.reports[b].gradient(j)));
        c.max_abs_deviation(j) = std::max(c.max_abs_deviation(j), dev);
        if (scale > 0.0) c.max_rel_deviation(j) = std::max(c.max_rel_deviation(j), dev / scale);
        if (!skip && dev > band) c.passed = false;
      }
    }
  }
  return c;
}

std::string format_table(const Comparison& c, const std::vector<std::string>& names) {
  std::ostringstream os;
  char buf[64];
  const Index np = c.max_abs_deviation.size();
  auto cell = [&](const std::string& s) {
    std::snprintf(buf, sizeof buf, "%16s", s.c_str());
    os << buf;
  };
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%16.6e", v);
    os << buf;
  };
  std::snprintf(buf, sizeof buf, "%-8s", "method");
  os << buf;
  cell("G");
  for (Index j = 0; j < np; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    cell("dG/d" + (ju < names.size() ? names[ju] : std::to_string(j + 1)));
  }
  cell("transitions");
  cell("seconds");
  os << '\n';
  for (const auto& r : c.reports) {
    std::snprintf(buf, sizeof buf, "%-8s", r.method.c_str());
    os << buf;
    num(r.G);
    for (Index j = 0; j < np; ++j) num(r.gradient(j));
    cell(std::to_string(r.transitions));
    std::snprintf(buf, sizeof buf, "%16.3f", r.wall_seconds);
    os << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%-8s", "max|d|");
  os << buf;
  cell("");
  for (Index j = 0; j < np; ++j) num(c.max_abs_deviation(j));
  os << '\n';
  std::snprintf(buf, sizeof buf, "%-8s", "max rel");
  os << buf;
  cell("");
  for (Index j = 0; j < np; ++j) num(c.max_rel_deviation(j));
  os << '\n';
  const auto& fd = c.reports.front();
  for (std::size_t j = 0; j < fd.structural_change.size(); ++j) {
    if (fd.structural_change[j]) {
      os << "note: FD perturbation of component " << j + 1 << " changed the transition count\n";
    }
  }
  os << (c.passed ? "agreement: PASS\n" : "agreement: FAIL\n");
  return os.str();
}

}  // namespace hybridsens
