#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "hybridsens/errors.hpp"
#include "hybridsens/integrate.hpp"
#include "hybridsens/problems.hpp"

using namespace hybridsens;

namespace {

VectorXd em_p(double beta = 0.0) {
  VectorXd p(4);
  p << 32.0 * M_PI * M_PI, M_PI * M_PI, 205.0, beta;
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const HybridError& e) {
    return e.kind();
  }
  FAIL("no exception");
  return ErrorKind::EvaluationFailure;
}

}  // namespace

TEST_CASE("problem registry") {
  const auto names = problem_names();
  CHECK(names.size() == 3);
  for (const auto& n : names) CHECK(build(n).name == n);
  CHECK(kind_of([] { build("pendulum"); }) == ErrorKind::UnknownProblem);
}

TEST_CASE("override validation") {
  CHECK(build("em", {{"k_b", 10.0}}).p_nominal(1) == 10.0);
  CHECK(build("simple-hybrid", {{"p", 3.0}, {"tf", 2.0}}).tf == 2.0);
  CHECK(kind_of([] { build("em", {{"gamma", 1.0}}); }) == ErrorKind::InvalidOverride);
  CHECK(kind_of([] { build("em", {{"load_sign", 0.5}}); }) == ErrorKind::InvalidOverride);
  CHECK(kind_of([] { build("em", {{"integrand", 1.0}}); }) == ErrorKind::InvalidOverride);
  CHECK(kind_of([] { build("simple-hybrid", {{"load_sign", -1.0}}); }) ==
        ErrorKind::InvalidOverride);
  CHECK(kind_of([] { build("em", {{"k_b", 1000.0}}); }) == ErrorKind::InvalidOverride);
  CHECK(kind_of([] { build("em", {{"alpha", -1.0}}); }) == ErrorKind::InvalidOverride);
  CHECK(kind_of([] { build("linear-hi2", {{"tf", -1.0}}); }) == ErrorKind::InvalidOverride);
  CHECK(kind_of([] {
          build("simple-hybrid", {{"p", std::numeric_limits<double>::quiet_NaN()}});
        }) == ErrorKind::InvalidOverride);
}

TEST_CASE("em constants at the nominal parameters") {
  const EmConstants c = em_constants(em_p());
  CHECK(c.u0 == doctest::Approx(0.12628085).epsilon(1e-7));
  CHECK(c.fbar == doctest::Approx(0.74623838).epsilon(1e-7));
  const VectorXd p = em_p();
  CHECK(c.u0 == doctest::Approx(-std::log(1e-20 / (p(0) - p(1))) / (2 * p(2))));
}

TEST_CASE("em stress passes through the memory point") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  std::uniform_real_distribution<double> z(-0.5, 0.5);
  for (const double beta : {0.0, 3.0}) {
    const VectorXd p = em_p(beta);
    for (int i = 0; i < 20; ++i) {
      const double us = u(rng);
      const double zs = z(rng);
      for (const double xi : {1.0, -1.0}) {
        CHECK(em_stress(us, us, zs, xi, p) == doctest::Approx(zs).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("em stress is odd under reversal of direction") {
  const VectorXd p = em_p(2.0);
  for (const double u : {-0.01, 0.002, 0.02}) {
    const double a = em_stress(u, 0.001, 0.05, 1.0, p);
    const double b = em_stress(-u, -0.001, -0.05, -1.0, p);
    CHECK(a == doctest::Approx(-b).epsilon(1e-12));
    CHECK(em_memory_update(0.001, 0.05, 1.0, p) ==
          doctest::Approx(-em_memory_update(-0.001, -0.05, -1.0, p)).epsilon(1e-12));
  }
}

TEST_CASE("em loading branch from the origin") {
  const VectorXd p = em_p();
  double prev = 0.0;
  for (int i = 1; i <= 20; ++i) {
    const double u = 0.005 * i;
    const double s = em_stress(u, 0.0, 0.0, 1.0, p);
    CHECK(s > prev);
    prev = s;
  }
  // far along the branch the stress approaches the hardening asymptote
  const EmConstants c = em_constants(p);
  CHECK(em_stress(1.0, 0.0, 0.0, 1.0, p) == doctest::Approx(p(1) * 1.0 + c.fbar).epsilon(1e-6));
  // the origin sits mid-loop, where the tangent is the mean of k_a and k_b
  CHECK(em_stress_partials(0.0, 0.0, 0.0, 1.0, p).u ==
        doctest::Approx(0.5 * (p(0) + p(1))).epsilon(1e-9));
}

TEST_CASE("em memory update rejects an invalid log argument") {
  CHECK(kind_of([] { em_memory_update(0.0, 1e6, 1.0, em_p()); }) == ErrorKind::DomainError);
  CHECK(kind_of([] { em_memory_update(0.0, -1e6, -1.0, em_p()); }) == ErrorKind::DomainError);
}

TEST_CASE("em stress partials agree with central differences") {
  const VectorXd p = em_p(1.5);
  const double u = 0.004, us = -0.002, zs = 0.1;
  for (const double xi : {1.0, -1.0}) {
    const EmStressPartials sp = em_stress_partials(u, us, zs, xi, p);
    CHECK(sp.value == doctest::Approx(em_stress(u, us, zs, xi, p)));
    const double h = 1e-7;
    auto fd = [&](auto f) { return (f(h) - f(-h)) / (2 * h); };
    CHECK(sp.u == doctest::Approx(fd([&](double d) { return em_stress(u + d, us, zs, xi, p); }))
                      .epsilon(1e-5));
    CHECK(sp.ustar ==
          doctest::Approx(fd([&](double d) { return em_stress(u, us + d, zs, xi, p); }))
              .epsilon(1e-5));
    CHECK(sp.zstar ==
          doctest::Approx(fd([&](double d) { return em_stress(u, us, zs + d, xi, p); }))
              .epsilon(1e-5));
    for (int k = 0; k < 4; ++k) {
      const double hk = 1e-4 * std::max(1.0, std::abs(p(k)));
      VectorXd a = p, b = p;
      a(k) += hk;
      b(k) -= hk;
      const double ref = (em_stress(u, us, zs, xi, a) - em_stress(u, us, zs, xi, b)) / (2 * hk);
      CHECK(sp.p(k) == doctest::Approx(ref).epsilon(1e-4).scale(1e-8));
    }
  }
}

TEST_CASE("em response is symmetric in the load sign") {
  const HybridSystemSpec pos = build("em", {{"tf", 4.0}});
  const HybridSystemSpec neg = build("em", {{"tf", 4.0}, {"load_sign", -1.0}});
  CHECK(neg.initial_mode == 1);
  const ForwardResult a = simulate(pos, pos.p_nominal);
  const ForwardResult b = simulate(neg, neg.p_nominal);
  REQUIRE(a.transitions.size() == b.transitions.size());
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    CHECK(a.transitions[i].t == doctest::Approx(b.transitions[i].t).epsilon(1e-7));
    CHECK(a.transitions[i].before.y(0) ==
          doctest::Approx(-b.transitions[i].before.y(0)).epsilon(1e-6));
  }
  CHECK(a.G == doctest::Approx(b.G).epsilon(1e-7));
}

TEST_CASE("em functional grows with k_b") {
  const HybridSystemSpec spec = build("em");
  const HybridSystemSpec stiffer = build("em", {{"k_b", spec.p_nominal(1) * 1.01}});
  const double g0 = simulate(spec, spec.p_nominal).G;
  const double g1 = simulate(stiffer, stiffer.p_nominal).G;
  CHECK(g1 > g0);
  CHECK(g0 == doctest::Approx(0.04994).epsilon(2e-3));
}

TEST_CASE("linear-hi2 closed form") {
  const VectorXd p = build("linear-hi2").p_nominal;
  const LinearHi2Exact a = linear_hi2_exact(1.0, p);
  CHECK(a.y1 == doctest::Approx(std::sin(1.0)));
  CHECK(a.y2 == doctest::Approx(std::cos(1.0) - 0.8));
  CHECK(a.z == doctest::Approx(0.3));
  const LinearHi2Exact b = linear_hi2_exact(2.0, p);
  CHECK(b.y2 == doctest::Approx(std::cos(2.0) + 0.2));
  CHECK(b.z == doctest::Approx(-0.7));
}
