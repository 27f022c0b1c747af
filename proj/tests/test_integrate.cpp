#include <cmath>

#include "doctest.h"
#include "hybridsens/errors.hpp"
#include "hybridsens/hi2.hpp"
#include "hybridsens/integrate.hpp"
#include "hybridsens/problems.hpp"

using namespace hybridsens;

namespace {

// Transition times and states of the scalar switching problem, from a
// 30-digit reference solution.
constexpr double kTimes[3] = {0.21921592228980355, 0.27581259147348379, 1.2663478417960716};
constexpr double kStates[3] = {0.78740687274458596, 1.2382470290806234, 2.9743460981747906};
constexpr double kG = 20.029074653359594;

ForwardResult run(const HybridSystemSpec& spec, ForwardOptions o = {}) {
  return simulate(spec, spec.p_nominal, o);
}

}  // namespace

TEST_CASE("simple-hybrid transitions match the reference solution") {
  const HybridSystemSpec spec = build("simple-hybrid");
  ForwardOptions o;
  o.tol = {1e-10, 1e-12};
  const ForwardResult r = run(spec, o);
  REQUIRE(r.transitions.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const TransitionRecord& rec = r.transitions[i];
    CHECK(rec.index == i + 1);
    CHECK(std::abs(rec.t - kTimes[i]) < 1e-7);
    CHECK(std::abs(rec.before.y(0) - kStates[i]) < 1e-7);
    CHECK(std::abs(rec.after.y(0) - rec.before.y(0)) < 1e-14);
    CHECK(std::abs(rec.guard_value) < 1e-9);
    CHECK(rec.mode_after != rec.mode_before);
  }
  CHECK(r.transitions[0].mode_before == 0);
  CHECK(std::abs(r.G - kG) < 1e-6);
  CHECK(r.traces.back().t_end == spec.tf);
}

TEST_CASE("dense output reproduces step endpoints") {
  const HybridSystemSpec spec = build("simple-hybrid");
  const ForwardResult r = run(spec);
  for (const auto& tr : r.traces) {
    for (const auto& st : tr.steps) {
      CHECK(st.y(st.t_left)(0) == doctest::Approx(st.y_left(0)).epsilon(1e-14));
      CHECK(st.y(st.t_right)(0) == doctest::Approx(st.y_right(0)).epsilon(1e-14));
      CHECK(st.yd(st.t_right)(0) == doctest::Approx(st.yd_right(0)).epsilon(1e-12));
    }
    const Point mid = tr.at(0.5 * (tr.t_start + tr.t_end));
    CHECK(mid.y.size() == 1);
  }
}

TEST_CASE("transition budget raises ChatteringLimit") {
  const HybridSystemSpec spec = build("simple-hybrid");
  ForwardOptions o;
  o.max_transitions = 2;
  try {
    run(spec, o);
    FAIL("expected ChatteringLimit");
  } catch (const HybridError& e) {
    CHECK(e.kind() == ErrorKind::ChatteringLimit);
  }
}

TEST_CASE("a horizon before the first switch has no transitions") {
  const HybridSystemSpec spec = build("simple-hybrid", {{"tf", 0.2}});
  const ForwardResult r = run(spec);
  CHECK(r.transitions.empty());
  // x' = 4 - x from x = 0
  CHECK(r.traces.back().steps.back().y_right(0) ==
        doctest::Approx(4.0 * (1.0 - std::exp(-0.2))).epsilon(1e-7));
}

TEST_CASE("refine_root finds bracketed roots") {
  const auto f = [](double t) { return std::cos(t); };
  const double r = refine_root(f, 0.0, 2.0, f(0.0), f(2.0), 1e-14, 1e-14);
  CHECK(r == doctest::Approx(M_PI / 2).epsilon(1e-12));

  const auto g = [](double t) { return t * t * t - 0.001; };
  const double s = refine_root(g, 0.0, 1.0, g(0.0), g(1.0), 1e-15, 1e-15);
  CHECK(s == doctest::Approx(0.1).epsilon(1e-9));

  try {
    refine_root(f, 0.0, 1.0, f(0.0), f(1.0), 1e-14, 1e-14);
    FAIL("expected NoSignChange");
  } catch (const HybridError& e) {
    CHECK(e.kind() == ErrorKind::NoSignChange);
  }
}

TEST_CASE("post-transition states are consistent") {
  for (const std::string name : {"simple-hybrid", "em", "linear-hi2"}) {
    const HybridSystemSpec spec = build(name);
    const ForwardResult r = run(spec);
    CHECK(!r.transitions.empty());
    for (const auto& rec : r.transitions) {
      CHECK(consistency_residual(spec, rec.mode_after, rec.after, spec.p_nominal) < 1e-8);
    }
    CHECK(r.max_consistency_residual < 1e-8);
  }
}

TEST_CASE("linear-hi2 follows its closed form") {
  const HybridSystemSpec spec = build("linear-hi2");
  ForwardOptions o;
  o.tol = {1e-9, 1e-12};
  const ForwardResult r = run(spec, o);
  REQUIRE(r.transitions.size() == 1);
  CHECK(std::abs(r.transitions[0].t - 1.5) < 1e-9);
  double worst_y1 = 0.0;
  double worst_hidden = 0.0;
  for (const auto& tr : r.traces) {
    for (const auto& st : tr.steps) {
      worst_y1 = std::max(worst_y1, std::abs(st.y_right(0) - std::sin(st.t_right)));
      const Point pt = tr.at(st.t_right);
      worst_hidden = std::max(worst_hidden,
                              hi2_hidden_residual(spec, tr.mode, pt, spec.p_nominal).norm());
    }
  }
  CHECK(worst_y1 < 10 * o.tol.rtol);
  CHECK(worst_hidden < 10 * o.tol.atol);
  const auto& after = r.transitions[0].after;
  const LinearHi2Exact ex = linear_hi2_exact(1.5 + 1e-15, spec.p_nominal);
  CHECK(after.y(1) == doctest::Approx(ex.y2).epsilon(1e-6));
  CHECK(after.z(0) == doctest::Approx(ex.z).epsilon(1e-6));
}

TEST_CASE("em starts consistent and reverses at velocity zeros") {
  const HybridSystemSpec spec = build("em");
  const ForwardResult r = run(spec);
  CHECK(r.initial.y.norm() == 0.0);
  CHECK(std::abs(r.initial.z(0)) < 1e-12);
  CHECK(r.transitions.size() == 19);
  for (const auto& rec : r.transitions) {
    CHECK(std::abs(rec.before.y(1)) < 1e-9);
    CHECK(rec.after.ystar(0) == rec.before.y(0));
    CHECK(rec.after.zstar(0) == rec.before.z(0));
  }
}
