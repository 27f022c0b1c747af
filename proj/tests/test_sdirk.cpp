#include <cmath>

#include "doctest.h"
#include "hybridsens/errors.hpp"
#include "hybridsens/sdirk.hpp"

using namespace hybridsens;

namespace {

// x' = -x, optionally written through an algebraic copy xa = x.
class Decay final : public DaeSystem {
 public:
  explicit Decay(bool with_algebraic) : alg_(with_algebraic) {}
  Index differential_size() const override { return 1; }
  Index algebraic_size() const override { return alg_ ? 1 : 0; }
  VectorXd residual(double, const VectorXd& xd, const VectorXd& x,
                    const VectorXd& xa) const override {
    if (!alg_) return VectorXd::Constant(1, xd(0) + x(0));
    VectorXd r(2);
    r << xd(0) + xa(0), xa(0) - x(0);
    return r;
  }
  Linearization linearize(double, const VectorXd&, const VectorXd&, const VectorXd&,
                          bool) const override {
    Linearization l;
    const Index n = alg_ ? 2 : 1;
    l.xdot = MatrixXd::Zero(n, 1);
    l.xdot(0, 0) = 1.0;
    l.x = MatrixXd::Zero(n, 1);
    l.xa = MatrixXd::Zero(n, alg_ ? 1 : 0);
    if (alg_) {
      l.xa << 1.0, 1.0;
      l.x(1, 0) = -1.0;
    } else {
      l.x(0, 0) = 1.0;
    }
    return l;
  }
  Index quadrature_size() const override { return 1; }
  VectorXd quadrature(const DaeState& s) const override { return s.x; }

 private:
  bool alg_;
};

DaeState start(bool alg) {
  DaeState s;
  s.t = 0.0;
  s.x = VectorXd::Ones(1);
  s.xdot = -VectorXd::Ones(1);
  s.xa = alg ? VectorXd::Ones(1) : VectorXd();
  s.q = VectorXd::Zero(1);
  return s;
}

double single_step_error(double h) {
  const Decay sys(false);
  const StepAttempt a = attempt_step(sys, start(false), h, Tolerances{1e-6, 1e-12});
  REQUIRE(a.converged);
  return std::abs(a.end.x(0) - std::exp(-h));
}

}  // namespace

TEST_CASE("adaptive integration of a decaying ODE meets the tolerance") {
  for (const bool alg : {false, true}) {
    const Decay sys(alg);
    double h = 0.0;
    std::size_t steps = 0;
    const DaeState end = advance(sys, start(alg), 3.0, Tolerances{1e-8, 1e-12}, h,
                                 [&](const DaeState&) { ++steps; });
    CHECK(end.t == 3.0);
    CHECK(end.x(0) == doctest::Approx(std::exp(-3.0)).epsilon(1e-6));
    CHECK(end.q(0) == doctest::Approx(1.0 - std::exp(-3.0)).epsilon(1e-6));
    if (alg) CHECK(std::abs(end.xa(0) - end.x(0)) < 1e-10);
    CHECK(steps > 10);
  }
}

TEST_CASE("local error is third order") {
  const double e1 = single_step_error(0.1);
  const double e2 = single_step_error(0.05);
  const double order = std::log2(e1 / e2);
  CHECK(order > 2.7);
  CHECK(order < 3.3);
}

TEST_CASE("backward integration returns to the starting value") {
  const Decay sys(false);
  double h = 0.0;
  DaeState end = advance(sys, start(false), 2.0, Tolerances{1e-10, 1e-14}, h, {});
  end.q.setZero();
  h = 0.0;
  const DaeState back = advance(sys, end, 0.0, Tolerances{1e-10, 1e-14}, h, {});
  CHECK(back.t == 0.0);
  CHECK(back.x(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(back.q(0) == doctest::Approx(-(1.0 - std::exp(-2.0))).epsilon(1e-7));
}

TEST_CASE("step factor is clamped") {
  CHECK(step_factor(0.0) == doctest::Approx(5.0));
  CHECK(step_factor(1e12) == doctest::Approx(0.2));
  CHECK(step_factor(1.0) == doctest::Approx(0.9));
}

TEST_CASE("step limit raises MaxStepsExceeded") {
  const Decay sys(false);
  double h = 0.0;
  try {
    advance(sys, start(false), 100.0, Tolerances{1e-10, 1e-14}, h, {}, 5);
    FAIL("expected an exception");
  } catch (const HybridError& e) {
    CHECK(e.kind() == ErrorKind::MaxStepsExceeded);
  }
}
