#include "hybridsens/problems.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/AutoDiff>

#include "hybridsens/errors.hpp"

namespace hybridsens {

namespace {

constexpr double kPi = std::numbers::pi;

// --- simple-hybrid --------------------------------------------------------

double poly(double x) { return x * x * x - 5.0 * x * x + 7.0 * x; }
double poly_x(double x) { return 3.0 * x * x - 10.0 * x + 7.0; }

JacobianSet empty_memory(JacobianSet j, Index nx, Index ny, Index nz) {
  j.ystar = MatrixXd::Zero(nx, ny);
  j.zstar = MatrixXd::Zero(nx, nz);
  return j;
}

// Continuity map y+ = y- (and z+ = z- when `with_z`).
TransitionMap identity_map(Index ny, Index nz, Index np, bool with_z = false) {
  const Index rows = with_z ? ny + nz : ny;
  TransitionMap m;
  m.rows = rows;
  m.T = [ny, nz, with_z](const Point& a, const Point& b, const VectorXd&) {
    VectorXd r(with_z ? ny + nz : ny);
    r.head(ny) = a.y - b.y;
    if (with_z) r.tail(nz) = a.z - b.z;
    return r;
  };
  m.partials = [ny, nz, np, rows, with_z](const Point&, const Point&, const VectorXd&) {
    MapPartials mp;
    mp.yd_after = MatrixXd::Zero(rows, ny);
    mp.y_after = MatrixXd::Identity(rows, ny);
    mp.z_after = MatrixXd::Zero(rows, nz);
    mp.yd_before = MatrixXd::Zero(rows, ny);
    mp.y_before = -MatrixXd::Identity(rows, ny);
    mp.z_before = MatrixXd::Zero(rows, nz);
    if (with_z) {
      mp.z_after.bottomRows(nz).setIdentity();
      mp.z_before.bottomRows(nz) = -MatrixXd::Identity(nz, nz);
    }
    mp.p = MatrixXd::Zero(rows, np);
    mp.t = VectorXd::Zero(rows);
    return mp;
  };
  return m;
}

HybridSystemSpec simple_hybrid() {
  HybridSystemSpec s;
  s.name = "simple-hybrid";
  s.dae_class = DaeClass::FullyImplicit01;
  s.n_y = 1;
  s.n_z = 0;
  s.p_nominal = VectorXd::Constant(1, 2.9);
  s.parameter_names = {"p"};
  s.state_names = {"x"};
  s.t0 = 0.0;
  s.tf = 5.0;

  const double slope[2] = {1.0, 2.0};
  const double force[2] = {4.0, 10.0};
  for (int m = 0; m < 2; ++m) {
    Mode mode;
    mode.name = m == 0 ? "slow" : "fast";
    const double a = slope[m];
    const double b = force[m];
    mode.dynamics.residual = [a, b](const Point& pt, const VectorXd&) {
      return VectorXd::Constant(1, pt.yd(0) - (b - a * pt.y(0)));
    };
    mode.dynamics.jacobian = [a](const Point&, const VectorXd&) {
      JacobianSet j;
      j.yd = MatrixXd::Ones(1, 1);
      j.y = MatrixXd::Constant(1, 1, a);
      j.z = MatrixXd::Zero(1, 0);
      j.p = MatrixXd::Zero(1, 1);
      j.t = VectorXd::Zero(1);
      return empty_memory(j, 1, 1, 0);
    };
    mode.guard.h = [](const Point& pt, const VectorXd& p) { return poly(pt.y(0)) - p(0); };
    mode.guard.partials = [](const Point& pt, const VectorXd&) {
      GuardPartials g;
      g.yd = RowVectorXd::Zero(1);
      g.y = RowVectorXd::Constant(1, poly_x(pt.y(0)));
      g.z = RowVectorXd::Zero(0);
      g.p = RowVectorXd::Constant(1, -1.0);
      return g;
    };
    mode.exit_map = identity_map(1, 0, 1);
    s.modes.push_back(std::move(mode));
  }
  s.initial.y0 = VectorXd::Zero(1);
  s.initial.z0 = VectorXd::Zero(0);
  s.integrand.g = [](const Point& pt, const VectorXd&) { return pt.y(0); };
  s.integrand.partials = [](const Point&, const VectorXd&) {
    IntegrandPartials ip;
    ip.y = RowVectorXd::Ones(1);
    ip.z = RowVectorXd::Zero(0);
    ip.p = RowVectorXd::Zero(1);
    return ip;
  };
  return s;
}

// --- EM oscillator ----------------------------------------------------------

constexpr double kDelta = 1e-20;
constexpr double kMass = 1.0;
constexpr double kArea = 1.0;

using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 7, 1>>;

double value_of(double x) { return x; }
double value_of(const Ad& x) { return x.value(); }

template <typename T>
struct EmParams {
  T ka, kb, alpha, beta;
};

template <typename T>
void constants(const EmParams<T>& q, T& u0, T& fbar) {
  using std::exp;
  using std::log;
  u0 = -log(kDelta / (q.ka - q.kb)) / (2.0 * q.alpha);
  fbar = (q.ka - q.kb) / (2.0 * q.alpha) * (1.0 - exp(-2.0 * q.alpha * u0));
}

template <typename T>
T memory_update(const T& ustar, const T& zstar, double xi, const EmParams<T>& q) {
  using std::exp;
  using std::log;
  using std::sinh;
  T u0, fbar;
  constants(q, u0, fbar);
  const T inner = -2.0 * q.beta * ustar + 2.0 * sinh(q.beta * ustar) + q.kb * ustar +
                  (q.ka - q.kb) / q.alpha * xi * exp(-2.0 * q.alpha * u0) + xi * fbar - zstar;
  const T arg = xi * q.alpha / (q.ka - q.kb) * inner;
  const double arg_value = value_of(arg);
  if (!(arg_value > 0.0) || !std::isfinite(arg_value)) {
    throw HybridError(ErrorKind::DomainError,
                      "memory update log argument is not positive (" +
                          std::to_string(arg_value) + ")");
  }
  return ustar + 2.0 * xi * u0 + xi / q.alpha * log(arg);
}

template <typename T>
T stress(const T& u, const T& ustar, const T& zstar, double xi, const EmParams<T>& q) {
  using std::exp;
  using std::sinh;
  T u0, fbar;
  constants(q, u0, fbar);
  const T ui = memory_update(ustar, zstar, xi, q);
  return -2.0 * q.beta * u + 2.0 * sinh(q.beta * u) + q.kb * u -
         xi * (q.ka - q.kb) / q.alpha *
             (exp(-q.alpha * (u * xi - ui * xi + 2.0 * u0)) - exp(-2.0 * q.alpha * u0)) +
         xi * fbar;
}

EmParams<double> plain(const VectorXd& p) { return {p(0), p(1), p(2), p(3)}; }

double load(double t, double sign) { return sign * 0.5 * t * std::sin(2.0 * kPi * t); }
double load_t(double t, double sign) {
  return sign * 0.5 * (std::sin(2.0 * kPi * t) + 2.0 * kPi * t * std::cos(2.0 * kPi * t));
}

HybridSystemSpec em(double load_sign) {
  HybridSystemSpec s;
  s.name = "em";
  s.dae_class = DaeClass::Index1Memory;
  s.n_y = 2;
  s.n_z = 1;
  s.p_nominal.resize(4);
  s.p_nominal << 32.0 * kPi * kPi, kPi * kPi, 205.0, 0.0;
  s.parameter_names = {"k_a", "k_b", "alpha", "beta"};
  s.state_names = {"u", "v"};
  s.algebraic_names = {"z"};
  s.t0 = 0.0;
  s.tf = 10.0;

  // Mode 0 loads in the positive direction (xi = +1), mode 1 unloads.
  for (int m = 0; m < 2; ++m) {
    const double xi = m == 0 ? 1.0 : -1.0;
    Mode mode;
    mode.name = m == 0 ? "loading" : "unloading";
    mode.dynamics.residual = [xi, load_sign](const Point& pt, const VectorXd& p) {
      VectorXd r(3);
      r(0) = pt.yd(0) - pt.y(1);
      r(1) = pt.yd(1) - (-kArea * pt.z(0) + load(pt.t, load_sign)) / kMass;
      r(2) = pt.z(0) - em_stress(pt.y(0), pt.ystar(0), pt.zstar(0), xi, p);
      return r;
    };
    mode.dynamics.jacobian = [xi, load_sign](const Point& pt, const VectorXd& p) {
      const EmStressPartials sp = em_stress_partials(pt.y(0), pt.ystar(0), pt.zstar(0), xi, p);
      JacobianSet j;
      j.yd = MatrixXd::Zero(3, 2);
      j.yd(0, 0) = 1.0;
      j.yd(1, 1) = 1.0;
      j.y = MatrixXd::Zero(3, 2);
      j.y(0, 1) = -1.0;
      j.y(2, 0) = -sp.u;
      j.z = MatrixXd::Zero(3, 1);
      j.z(1, 0) = kArea / kMass;
      j.z(2, 0) = 1.0;
      j.ystar = MatrixXd::Zero(3, 2);
      j.ystar(2, 0) = -sp.ustar;
      j.zstar = MatrixXd::Zero(3, 1);
      j.zstar(2, 0) = -sp.zstar;
      j.p = MatrixXd::Zero(3, 4);
      j.p.row(2) = -sp.p;
      j.t = VectorXd::Zero(3);
      j.t(1) = -load_t(pt.t, load_sign) / kMass;
      return j;
    };
    mode.guard.h = [](const Point& pt, const VectorXd&) { return pt.y(1); };
    mode.guard.partials = [](const Point&, const VectorXd&) {
      GuardPartials g;
      g.yd = RowVectorXd::Zero(2);
      g.y = RowVectorXd::Zero(2);
      g.y(1) = 1.0;
      g.z = RowVectorXd::Zero(1);
      g.p = RowVectorXd::Zero(4);
      return g;
    };
    // With the memory set to the post-transition state, k vanishes
    // identically, so z+ is fixed by continuity.
    mode.exit_map = identity_map(2, 1, 4, true);
    s.modes.push_back(std::move(mode));
  }
  s.initial_mode = load_sign < 0 ? 1 : 0;
  s.initial.y0 = VectorXd::Zero(2);
  s.initial.z0 = VectorXd::Zero(1);
  s.integrand.g = [](const Point& pt, const VectorXd&) { return pt.y(0) * pt.y(0); };
  s.integrand.partials = [](const Point& pt, const VectorXd&) {
    IntegrandPartials ip;
    ip.y = RowVectorXd::Zero(2);
    ip.y(0) = 2.0 * pt.y(0);
    ip.z = RowVectorXd::Zero(1);
    ip.p = RowVectorXd::Zero(4);
    return ip;
  };
  return s;
}

// --- linear Hessenberg index-2 ----------------------------------------------
// y1' = y2 + z + p1, y2' = -y1, 0 = y1 - sin t; y2(0) = a; at t = t_s the
// jump y2+ = y2- + c.

HybridSystemSpec linear_hi2(int integrand) {
  HybridSystemSpec s;
  s.name = "linear-hi2";
  s.dae_class = DaeClass::Hessenberg2;
  s.n_y = 2;
  s.n_z = 1;
  s.p_nominal.resize(4);
  s.p_nominal << 0.5, 0.2, 1.0, 1.5;
  s.parameter_names = {"p1", "a", "c", "t_s"};
  s.state_names = {"y1", "y2"};
  s.algebraic_names = {"z"};
  s.t0 = 0.0;
  s.tf = 3.0;

  for (int m = 0; m < 2; ++m) {
    Mode mode;
    mode.name = m == 0 ? "before" : "after";
    mode.dynamics.residual = [](const Point& pt, const VectorXd& p) {
      VectorXd r(3);
      r(0) = pt.yd(0) - (pt.y(1) + pt.z(0) + p(0));
      r(1) = pt.yd(1) + pt.y(0);
      r(2) = pt.y(0) - std::sin(pt.t);
      return r;
    };
    mode.dynamics.jacobian = [](const Point& pt, const VectorXd&) {
      JacobianSet j;
      j.yd = MatrixXd::Zero(3, 2);
      j.yd(0, 0) = 1.0;
      j.yd(1, 1) = 1.0;
      j.y = MatrixXd::Zero(3, 2);
      j.y(0, 1) = -1.0;
      j.y(1, 0) = 1.0;
      j.y(2, 0) = 1.0;
      j.z = MatrixXd::Zero(3, 1);
      j.z(0, 0) = -1.0;
      j.p = MatrixXd::Zero(3, 4);
      j.p(0, 0) = -1.0;
      j.t = VectorXd::Zero(3);
      j.t(2) = -std::cos(pt.t);
      return empty_memory(j, 3, 2, 1);
    };
    if (m == 0) {
      mode.guard.h = [](const Point& pt, const VectorXd& p) { return pt.t - p(3); };
      mode.guard.partials = [](const Point&, const VectorXd&) {
        GuardPartials g;
        g.yd = RowVectorXd::Zero(2);
        g.y = RowVectorXd::Zero(2);
        g.z = RowVectorXd::Zero(1);
        g.p = RowVectorXd::Zero(4);
        g.p(3) = -1.0;
        g.t = 1.0;
        return g;
      };
      TransitionMap jump;
      jump.rows = 1;
      jump.T = [](const Point& a, const Point& b, const VectorXd& p) {
        return VectorXd::Constant(1, a.y(1) - b.y(1) - p(2));
      };
      jump.partials = [](const Point&, const Point&, const VectorXd&) {
        MapPartials mp;
        mp.yd_after = MatrixXd::Zero(1, 2);
        mp.y_after = MatrixXd::Zero(1, 2);
        mp.y_after(0, 1) = 1.0;
        mp.z_after = MatrixXd::Zero(1, 1);
        mp.yd_before = MatrixXd::Zero(1, 2);
        mp.y_before = MatrixXd::Zero(1, 2);
        mp.y_before(0, 1) = -1.0;
        mp.z_before = MatrixXd::Zero(1, 1);
        mp.p = MatrixXd::Zero(1, 4);
        mp.p(0, 2) = -1.0;
        mp.t = VectorXd::Zero(1);
        return mp;
      };
      mode.exit_map = std::move(jump);
    } else {
      // Final mode: the guard never changes sign.
      mode.guard.h = [](const Point&, const VectorXd&) { return 1.0; };
      mode.guard.partials = [](const Point&, const VectorXd&) {
        GuardPartials g;
        g.yd = RowVectorXd::Zero(2);
        g.y = RowVectorXd::Zero(2);
        g.z = RowVectorXd::Zero(1);
        g.p = RowVectorXd::Zero(4);
        return g;
      };
      mode.exit_map = identity_map(2, 1, 4);
    }
    s.modes.push_back(std::move(mode));
  }

  TransitionMap init;
  init.rows = 1;
  init.T = [](const Point& a, const Point&, const VectorXd& p) {
    return VectorXd::Constant(1, a.y(1) - p(1));
  };
  init.partials = [](const Point&, const Point&, const VectorXd&) {
    MapPartials mp;
    mp.yd_after = MatrixXd::Zero(1, 2);
    mp.y_after = MatrixXd::Zero(1, 2);
    mp.y_after(0, 1) = 1.0;
    mp.z_after = MatrixXd::Zero(1, 1);
    mp.yd_before = MatrixXd::Zero(1, 2);
    mp.y_before = MatrixXd::Zero(1, 2);
    mp.z_before = MatrixXd::Zero(1, 1);
    mp.p = MatrixXd::Zero(1, 4);
    mp.p(0, 1) = -1.0;
    mp.t = VectorXd::Zero(1);
    return mp;
  };
  s.initial.map = std::move(init);
  s.initial.y0 = VectorXd::Zero(2);
  s.initial.z0 = VectorXd::Zero(1);

  switch (integrand) {
    case 0:
      s.integrand.g = [](const Point& pt, const VectorXd&) {
        return pt.y(1) * pt.y(1) + pt.z(0) * pt.z(0);
      };
      s.integrand.partials = [](const Point& pt, const VectorXd&) {
        IntegrandPartials ip;
        ip.y = RowVectorXd::Zero(2);
        ip.y(1) = 2.0 * pt.y(1);
        ip.z = RowVectorXd::Constant(1, 2.0 * pt.z(0));
        ip.p = RowVectorXd::Zero(4);
        return ip;
      };
      break;
    case 1:
      s.integrand.g = [](const Point& pt, const VectorXd&) { return pt.y(0) + pt.y(1); };
      s.integrand.partials = [](const Point&, const VectorXd&) {
        IntegrandPartials ip;
        ip.y = RowVectorXd::Ones(2);
        ip.z = RowVectorXd::Zero(1);
        ip.p = RowVectorXd::Zero(4);
        return ip;
      };
      break;
    default:
      s.integrand.g = [](const Point& pt, const VectorXd&) { return pt.z(0); };
      s.integrand.partials = [](const Point&, const VectorXd&) {
        IntegrandPartials ip;
        ip.y = RowVectorXd::Zero(2);
        ip.z = RowVectorXd::Ones(1);
        ip.p = RowVectorXd::Zero(4);
        return ip;
      };
      break;
  }
  return s;
}

[[noreturn]] void bad_override(const std::string& what) {
  throw HybridError(ErrorKind::InvalidOverride, what);
}

}  // namespace

std::vector<std::string> problem_names() { return {"simple-hybrid", "em", "linear-hi2"}; }

HybridSystemSpec build(const std::string& name, const Overrides& overrides) {
  for (const auto& [key, value] : overrides) {
    if (!std::isfinite(value)) bad_override(key + " must be finite");
  }
  auto take = [&](const char* key, double fallback) {
    const auto it = overrides.find(key);
    return it == overrides.end() ? fallback : it->second;
  };

  HybridSystemSpec spec;
  if (name == "simple-hybrid") {
    spec = simple_hybrid();
  } else if (name == "em") {
    const double sign = take("load_sign", 1.0);
    if (sign != 1.0 && sign != -1.0) bad_override("load_sign must be +1 or -1");
    spec = em(sign);
  } else if (name == "linear-hi2") {
    const double which = take("integrand", 0.0);
    if (which != 0.0 && which != 1.0 && which != 2.0) bad_override("integrand must be 0, 1 or 2");
    spec = linear_hi2(static_cast<int>(which));
  } else {
    throw HybridError(ErrorKind::UnknownProblem, "unknown problem '" + name + "'");
  }

  for (const auto& [key, value] : overrides) {
    if (key == "t0") {
      spec.t0 = value;
    } else if (key == "tf") {
      spec.tf = value;
    } else if (key == "load_sign") {
      if (name != "em") bad_override("load_sign only applies to em");
    } else if (key == "integrand") {
      if (name != "linear-hi2") bad_override("integrand only applies to linear-hi2");
    } else {
      bool found = false;
      for (std::size_t i = 0; i < spec.parameter_names.size(); ++i) {
        if (spec.parameter_names[i] == key) {
          spec.p_nominal(static_cast<Index>(i)) = value;
          found = true;
        }
      }
      if (!found) bad_override("'" + key + "' is not a parameter of " + name);
    }
  }
  if (!(spec.t0 < spec.tf)) bad_override("t0 must be smaller than tf");
  if (name == "em") {
    const VectorXd& p = spec.p_nominal;
    if (!(p(0) > p(1)) || !(p(2) > 0.0)) bad_override("em needs k_a > k_b and alpha > 0");
  }
  check_structure(spec);
  return spec;
}

EmConstants em_constants(const VectorXd& p) {
  EmConstants c;
  constants(plain(p), c.u0, c.fbar);
  return c;
}

double em_memory_update(double ustar, double zstar, double xi, const VectorXd& p) {
  return memory_update(ustar, zstar, xi, plain(p));
}

double em_stress(double u, double ustar, double zstar, double xi, const VectorXd& p) {
  return stress(u, ustar, zstar, xi, plain(p));
}

EmStressPartials em_stress_partials(double u, double ustar, double zstar, double xi,
                                    const VectorXd& p) {
  using Vec7 = Eigen::Matrix<double, 7, 1>;
  auto var = [](double v, int i) { return Ad(v, Vec7::Unit(i)); };
  const EmParams<Ad> q{var(p(0), 3), var(p(1), 4), var(p(2), 5), var(p(3), 6)};
  const Ad s = stress(var(u, 0), var(ustar, 1), var(zstar, 2), xi, q);
  EmStressPartials out;
  out.value = s.value();
  out.u = s.derivatives()(0);
  out.ustar = s.derivatives()(1);
  out.zstar = s.derivatives()(2);
  out.p = s.derivatives().tail<4>().transpose();
  return out;
}

LinearHi2Exact linear_hi2_exact(double t, const VectorXd& p) {
  const double jump = t > p(3) ? p(2) : 0.0;
  return {std::sin(t), std::cos(t) - 1.0 + p(1) + jump, 1.0 - p(1) - p(0) - jump};
}

}  // namespace hybridsens
