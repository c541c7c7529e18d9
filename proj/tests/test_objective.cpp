#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bet/data.hpp"
#include "bet/objective.hpp"
#include "bet/optim.hpp"
#include "bet/rng.hpp"
#include "oracles.hpp"

using namespace bet;

namespace {

// seed-1 instance used across the suite; reference value frozen from a
// grad-tol 1e-10 solve
const SyntheticSpec kSpec{1000, 50, 0.1, 10.0, 1};
constexpr double kLambda = 1e-3;
constexpr double kReferenceValue = 0.26102554913191589;

struct Fixture {
  Dataset ds = generate_synthetic(kSpec);
  PermutedView view{ds, 1};
  EvalCounter counter;
  LogisticObjective obj{prefix(view, ds.size()), kLambda, &counter};
};

Vector random_w(SeededRng& rng, std::size_t dim, double scale = 1.0) {
  Vector w(dim);
  for (double& v : w) v = scale * rng.next_gaussian();
  return w;
}

}  // namespace

TEST_CASE("objective value at zero is ln 2", "[objective]") {
  Fixture f;
  const Vector zero(f.obj.dim(), 0.0);
  CHECK_THAT(f.obj.value(zero),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("objective value on a single example matches the closed form", "[objective]") {
  Dataset ds;
  ds.dim = 1;
  ds.examples.push_back({{{1, 1.0}}, +1});
  const PermutedView v(ds, 0);
  EvalCounter c;
  // smallest representable positive lambda stands in for "no regularizer"
  const LogisticObjective obj(prefix(v, 1), 1e-300, &c);
  const Vector w{10.0};
  CHECK_THAT(obj.value(w),
             Catch::Matchers::WithinRel(std::log1p(std::exp(-10.0)), 1e-12));
}

TEST_CASE("objective value at the reference optimum matches the frozen golden",
          "[objective]") {
  Fixture f;
  const ReferenceSolution sol = reference_minimize(f.obj, 1e-10);
  CHECK_THAT(sol.value, Catch::Matchers::WithinRel(kReferenceValue, 1e-12));
}

TEST_CASE("gradient at zero is the label-feature mean", "[objective]") {
  Fixture f;
  const Vector zero(f.obj.dim(), 0.0);
  const Vector g = f.obj.gradient(zero);
  Vector expected(f.obj.dim(), 0.0);
  for (std::size_t i = 0; i < f.ds.size(); ++i) {
    const Example& z = f.view.at(i);
    for (const Feature& feat : z.features)
      expected[feat.index - 1] -= 0.5 * z.label * feat.value;
  }
  for (double& v : expected) v /= static_cast<double>(f.ds.size());
  for (std::size_t j = 0; j < g.size(); ++j)
    REQUIRE_THAT(g[j], Catch::Matchers::WithinAbs(expected[j], 1e-12));
}

TEST_CASE("gradient of a zero-feature example is the regularizer", "[objective]") {
  Dataset ds;
  ds.dim = 2;
  ds.examples.push_back({{}, +1});
  const PermutedView v(ds, 0);
  EvalCounter c;
  const LogisticObjective obj(prefix(v, 1), 0.5, &c);
  const Vector w{2.0, -4.0};
  const Vector g = obj.gradient(w);
  CHECK_THAT(g[0], Catch::Matchers::WithinAbs(0.5 * 2.0, 1e-15));
  CHECK_THAT(g[1], Catch::Matchers::WithinAbs(0.5 * -4.0, 1e-15));
}

TEST_CASE("gradient matches central finite differences", "[objective]") {
  const Dataset ds = generate_synthetic({200, 20, 0.3, 5.0, 4});
  const PermutedView v(ds, 4);
  EvalCounter c;
  const LogisticObjective obj(prefix(v, 200), kLambda, &c);
  SeededRng rng(99);
  for (int probe = 0; probe < 20; ++probe) {
    const Vector w = random_w(rng, obj.dim(), 0.5);
    const Vector g = obj.gradient(w);
    const Vector fd = oracles::fd_gradient([&](const Vector& x) { return obj.value(x); }, w);
    Vector diff(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) diff[j] = g[j] - fd[j];
    REQUIRE(norm(diff) / norm(g) < 1e-5);
  }
}

TEST_CASE("value_and_gradient agrees with separate calls and charges one pass",
          "[objective]") {
  Fixture f;
  SeededRng rng(5);
  const Vector w = random_w(rng, f.obj.dim());
  const std::uint64_t before = f.counter.example_accesses;
  Vector g_joint;
  const double v_joint = f.obj.value_and_gradient(w, g_joint);
  CHECK(f.counter.example_accesses - before == f.ds.size());
  const double v_sep = f.obj.value(w);
  const Vector g_sep = f.obj.gradient(w);
  CHECK(v_joint == v_sep);
  CHECK(g_joint == g_sep);
  CHECK(f.counter.example_accesses - before == 3 * f.ds.size());
}

TEST_CASE("counter counts k value calls as k*n", "[objective]") {
  Fixture f;
  const Vector zero(f.obj.dim(), 0.0);
  const std::uint64_t before = f.counter.example_accesses;
  for (int k = 0; k < 7; ++k) f.obj.value(zero);
  CHECK(f.counter.example_accesses - before == 7 * f.ds.size());
}

TEST_CASE("objective stays finite at extreme scales", "[objective]") {
  Dataset ds;
  ds.dim = 2;
  ds.examples.push_back({{{1, 100.0}, {2, -100.0}}, +1});
  ds.examples.push_back({{{1, -100.0}}, -1});
  const PermutedView v(ds, 0);
  EvalCounter c;
  const LogisticObjective obj(prefix(v, 2), 1e-6, &c);
  const Vector w{1e4, -1e4};
  const double val = obj.value(w);
  CHECK(std::isfinite(val));
  const Vector g = obj.gradient(w);
  CHECK(all_finite(g));
}

TEST_CASE("objective is convex along random chords", "[objective]") {
  Fixture f;
  SeededRng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const Vector a = random_w(rng, f.obj.dim());
    const Vector b = random_w(rng, f.obj.dim());
    const double theta = rng.next_unit();
    Vector mix(a.size());
    for (std::size_t j = 0; j < a.size(); ++j)
      mix[j] = theta * a[j] + (1.0 - theta) * b[j];
    REQUIRE(f.obj.value(mix) <=
            theta * f.obj.value(a) + (1.0 - theta) * f.obj.value(b) + 1e-12);
  }
}

TEST_CASE("objective is strongly convex around the optimum", "[objective]") {
  Fixture f;
  const ReferenceSolution sol = reference_minimize(f.obj, 1e-10);
  SeededRng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const Vector w = random_w(rng, f.obj.dim(), 0.3);
    Vector delta(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) delta[j] = w[j] - sol.weights[j];
    REQUIRE(f.obj.value(w) >=
            sol.value + 0.5 * kLambda * squared_norm(delta) - 1e-9);
  }
}

TEST_CASE("opt_gap clamps and stays nonnegative", "[objective]") {
  Fixture f;
  const ReferenceSolution sol = reference_minimize(f.obj, 1e-10);
  SECTION("zero at the optimum") {
    CHECK(opt_gap(f.obj, sol.weights, sol.value) <= 1e-9);
    CHECK(opt_gap(f.obj, sol.weights, sol.value) >= 0.0);
  }
  SECTION("golden gap at zero") {
    const Vector zero(f.obj.dim(), 0.0);
    CHECK_THAT(opt_gap(f.obj, zero, sol.value),
               Catch::Matchers::WithinRel(std::log(2.0) - kReferenceValue, 1e-10));
  }
  SECTION("positive away from the optimum") {
    SeededRng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      const Vector w = random_w(rng, f.obj.dim());
      REQUIRE(opt_gap(f.obj, w, sol.value) > 0.0);
    }
  }
}

TEST_CASE("dimension mismatches are rejected", "[objective]") {
  Fixture f;
  const Vector wrong(f.obj.dim() + 1, 0.0);
  CHECK_THROWS_AS(f.obj.value(wrong), Error);
  CHECK_THROWS_AS(f.obj.gradient(wrong), Error);
}

TEST_CASE("lambda must be positive", "[objective]") {
  Fixture f;
  EvalCounter c;
  CHECK_THROWS_AS(LogisticObjective(prefix(f.view, 10), 0.0, &c), Error);
  CHECK_THROWS_AS(LogisticObjective(prefix(f.view, 10), -1.0, &c), Error);
}
