#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bet/data.hpp"
#include "bet/objective.hpp"
#include "bet/optim.hpp"
#include "bet/rng.hpp"
#include "oracles.hpp"

using namespace bet;

namespace {

const SyntheticSpec kSpec{1000, 50, 0.1, 10.0, 1};
constexpr double kLambda = 1e-3;
constexpr double kReferenceValue = 0.26102554913191589;

struct Fixture {
  Dataset ds = generate_synthetic(kSpec);
  PermutedView view{ds, 1};
  EvalCounter counter;
  LogisticObjective obj{prefix(view, ds.size()), kLambda, &counter};
};

oracles::QuadraticObjective make_spd_quadratic(std::size_t d, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<Vector> m(d, Vector(d));
  for (auto& row : m)
    for (double& v : row) v = rng.next_gaussian();
  std::vector<Vector> a(d, Vector(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += m[k][i] * m[k][j];
      a[i][j] = acc + (i == j ? 1.0 : 0.0);
    }
  Vector b(d);
  for (double& v : b) v = rng.next_gaussian();
  return oracles::QuadraticObjective(std::move(a), std::move(b));
}

}  // namespace

TEST_CASE("exact line search solves the pure quadratic ray in one step", "[optim]") {
  Dataset ds;
  ds.dim = 2;
  ds.examples.push_back({{}, +1});
  ds.examples.push_back({{}, -1});
  const PermutedView v(ds, 0);
  EvalCounter c;
  const LogisticObjective obj(prefix(v, 2), 0.7, &c);
  const Vector w{3.0, -2.0};
  Vector d(2);
  for (std::size_t i = 0; i < 2; ++i) d[i] = -w[i];
  const LineSearchResult ls = exact_line_search(obj, w, d);
  CHECK(ls.converged);
  CHECK_THAT(ls.alpha, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("exact line search lands on a stationary step", "[optim]") {
  Fixture f;
  SeededRng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Vector w(f.obj.dim());
    for (double& x : w) x = 0.5 * rng.next_gaussian();
    const Vector g = f.obj.gradient(w);
    Vector d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
    const LineSearchResult ls = exact_line_search(f.obj, w, d);
    REQUIRE(ls.alpha > 0.0);
    // finite-difference slope at the returned step
    const double h = 1e-6;
    Vector wp = w, wm = w;
    axpy(ls.alpha + h, d, wp);
    axpy(ls.alpha - h, d, wm);
    const double fd = (f.obj.value(wp) - f.obj.value(wm)) / (2.0 * h);
    const double dphi0 = -squared_norm(g);
    REQUIRE(std::fabs(fd) <= 1e-5 * std::fabs(dphi0) + 1e-12);
  }
}

TEST_CASE("exact line search rejects non-descent directions", "[optim]") {
  Fixture f;
  Vector w(f.obj.dim(), 0.1);
  SECTION("zero direction") {
    const Vector d(f.obj.dim(), 0.0);
    CHECK_THROWS_AS(exact_line_search(f.obj, w, d), Error);
  }
  SECTION("ascent direction") {
    const Vector g = f.obj.gradient(w);
    CHECK_THROWS_AS(exact_line_search(f.obj, w, g), Error);
  }
}

TEST_CASE("Fletcher-Reeves direction rule", "[optim]") {
  SECTION("first call is steepest descent") {
    NcgState st;
    const Vector g{1.0, -2.0};
    CHECK(ncg_direction(st, g) == Vector{-1.0, 2.0});
    CHECK(st.has_prev);
    CHECK(st.prev_gnorm2 == 5.0);
  }
  SECTION("beta is the gradient norm ratio") {
    NcgState st;
    st.has_prev = true;
    st.prev_gnorm2 = 4.0;
    st.prev_dir = {0.0, 1.0};
    const Vector g{1.0, 0.0};  // squared norm 1 -> beta 0.25
    CHECK(ncg_direction(st, g) == Vector{-1.0, 0.25});
  }
  SECTION("restarts when descent is lost") {
    NcgState st;
    st.has_prev = true;
    st.prev_gnorm2 = 0.01;  // huge beta drags the direction uphill
    st.prev_dir = {1.0, 0.0};
    const Vector g{1.0, 0.0};
    CHECK(ncg_direction(st, g) == Vector{-1.0, 0.0});
  }
}

TEST_CASE("nonlinear CG terminates on a d=20 quadratic within d iterations",
          "[optim]") {
  const auto quad = make_spd_quadratic(20, 13);
  InnerOptimizer opt(OptimizerKind::NonlinearCg);
  Vector w(20, 0.0);
  double grad_norm = std::numeric_limits<double>::infinity();
  std::size_t iters = 0;
  for (; iters < 20; ++iters) {
    const UpdateResult r = opt.update(quad, w);
    grad_norm = norm(quad.gradient(w));
    if (grad_norm < 1e-8) break;
    REQUIRE_FALSE(r.converged);
  }
  INFO("iterations used: " << iters + 1);
  CHECK(grad_norm < 1e-8);
}

TEST_CASE("two-loop recursion", "[optim]") {
  SECTION("empty memory falls back to -g") {
    LbfgsState st;
    const Vector g{3.0, -1.0};
    CHECK(lbfgs_direction(st, g) == Vector{-3.0, 1.0});
  }
  SECTION("an s == y pair acts as the identity") {
    LbfgsState st;
    REQUIRE(lbfgs_push_pair(st, {1.0, 2.0}, {1.0, 2.0}));
    const Vector g{3.0, -1.0};
    const Vector d = lbfgs_direction(st, g);
    CHECK_THAT(d[0], Catch::Matchers::WithinAbs(-3.0, 1e-14));
    CHECK_THAT(d[1], Catch::Matchers::WithinAbs(1.0, 1e-14));
  }
  SECTION("matches a dense BFGS rebuild on a quadratic") {
    const std::size_t d = 5;
    const auto quad = make_spd_quadratic(d, 21);
    OptimizerOptions opts;
    opts.lbfgs_memory = 16;  // never evicts at d=5
    LbfgsState st;
    st.memory = opts.lbfgs_memory;
    oracles::DenseBfgs dense(d);
    Vector w(d, 0.0);
    Vector g = quad.gradient(w);
    for (int step = 0; step < 5; ++step) {
      const Vector dir = lbfgs_direction(st, g);
      const Vector dir_oracle = dense.direction(g);
      for (std::size_t i = 0; i < d; ++i)
        REQUIRE_THAT(dir[i], Catch::Matchers::WithinAbs(dir_oracle[i], 1e-8));
      auto ray = quad.ray(w, dir);
      const LineSearchResult ls = minimize_ray(ray, quad.value(w), dot(g, dir));
      REQUIRE(ls.alpha > 0.0);
      Vector w_next = w;
      axpy(ls.alpha, dir, w_next);
      const Vector g_next = quad.gradient(w_next);
      Vector s(d), y(d);
      for (std::size_t i = 0; i < d; ++i) {
        s[i] = w_next[i] - w[i];
        y[i] = g_next[i] - g[i];
      }
      REQUIRE(lbfgs_push_pair(st, s, y));
      dense.push(s, y);
      w = w_next;
      g = g_next;
    }
  }
  SECTION("memory bound and curvature guard") {
    LbfgsState st;
    st.memory = 3;
    for (int i = 0; i < 7; ++i) {
      const double v = 1.0 + i;
      lbfgs_push_pair(st, {v, 0.0}, {v, 0.0});
      REQUIRE(st.pairs.size() <= 3);
    }
    CHECK(st.pairs.size() == 3);
    CHECK_FALSE(lbfgs_push_pair(st, {1.0, 0.0}, {-1.0, 0.0}));  // negative curvature
    CHECK_FALSE(lbfgs_push_pair(st, {1.0, 0.0}, {0.0, 1.0}));   // orthogonal
    CHECK(st.pairs.size() == 3);
  }
}

TEST_CASE("updates descend monotonically for every optimizer", "[optim]") {
  Fixture f;
  const struct {
    OptimizerKind kind;
    int steps;
  } cases[] = {{OptimizerKind::GradientDescent, 50},
               {OptimizerKind::NonlinearCg, 50},
               {OptimizerKind::Lbfgs, 15}};
  for (const auto& c : cases) {
    INFO("optimizer " << to_string(c.kind));
    InnerOptimizer opt(c.kind);
    Vector w(f.obj.dim(), 0.0);
    double last = std::numeric_limits<double>::infinity();
    for (int i = 0; i < c.steps; ++i) {
      const UpdateResult r = opt.update(f.obj, w);
      REQUIRE(r.value_after <= r.value_before);
      REQUIRE(r.value_after <= last);
      last = r.value_after;
    }
    CHECK(last < std::log(2.0));
  }
}

TEST_CASE("update is a no-op below the gradient floor", "[optim]") {
  Fixture f;
  const ReferenceSolution sol = reference_minimize(f.obj, 1e-10);
  OptimizerOptions opts;
  opts.grad_floor = 1e-9;  // the reference gradient sits below this
  InnerOptimizer opt(OptimizerKind::GradientDescent, opts);
  Vector w = sol.weights;
  const UpdateResult r = opt.update(f.obj, w);
  CHECK(r.converged);
  CHECK(w == sol.weights);
  CHECK(r.value_after == r.value_before);
}

TEST_CASE("L-BFGS reaches tight gradients in a frozen number of updates", "[optim]") {
  Fixture f;
  InnerOptimizer opt(OptimizerKind::Lbfgs);
  Vector w(f.obj.dim(), 0.0);
  std::size_t used = 0;
  for (std::size_t i = 1; i <= 200; ++i) {
    const UpdateResult r = opt.update(f.obj, w);
    if (r.grad_norm < 1e-8) {
      used = i;
      break;
    }
  }
  REQUIRE(used > 0);  // reached within 200 updates
  CHECK(used == 18);  // frozen regression bound
}

TEST_CASE("log optimization gap shrinks geometrically", "[optim]") {
  Fixture f;
  for (OptimizerKind kind : {OptimizerKind::Lbfgs, OptimizerKind::NonlinearCg}) {
    INFO("optimizer " << to_string(kind));
    InnerOptimizer opt(kind);
    Vector w(f.obj.dim(), 0.0);
    std::vector<double> log_gaps;
    for (int s = 0; s < 100; ++s) {
      const UpdateResult r = opt.update(f.obj, w);
      const double gap = r.value_after - kReferenceValue;
      if (gap < 1e-13) break;
      log_gaps.push_back(std::log(gap));
    }
    REQUIRE(log_gaps.size() >= 10);
    // least squares fit of log gap against the step index, from step 5 on
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t count = 0;
    for (std::size_t s = 5; s < log_gaps.size(); ++s) {
      const double x = static_cast<double>(s);
      sx += x;
      sy += log_gaps[s];
      sxx += x * x;
      sxy += x * log_gaps[s];
      ++count;
    }
    REQUIRE(count >= 5);
    const double n = static_cast<double>(count);
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    const double rate = std::exp(slope);
    INFO("fitted rate " << rate);
    CHECK(rate < 1.0);
    double mean_abs_resid = 0.0;
    for (std::size_t s = 5; s < log_gaps.size(); ++s)
      mean_abs_resid += std::fabs(log_gaps[s] - (intercept + slope * double(s)));
    mean_abs_resid /= n;
    INFO("mean abs residual " << mean_abs_resid);
    CHECK(mean_abs_resid < 2.0);
  }
}

TEST_CASE("a gradient-descent update costs one gradient pass plus the line search",
          "[optim]") {
  Fixture f;
  InnerOptimizer opt(OptimizerKind::GradientDescent);
  Vector w(f.obj.dim(), 0.0);
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t before = f.counter.example_accesses;
    const UpdateResult r = opt.update(f.obj, w);
    const std::uint64_t cost = f.counter.example_accesses - before;
    REQUIRE(cost == (1 + static_cast<std::uint64_t>(r.ls_evals)) * f.ds.size());
  }
}

TEST_CASE("updates are deterministic", "[optim]") {
  Fixture f;
  const auto run = [&] {
    InnerOptimizer opt(OptimizerKind::Lbfgs);
    Vector w(f.obj.dim(), 0.0);
    for (int i = 0; i < 10; ++i) opt.update(f.obj, w);
    return w;
  };
  CHECK(run() == run());
}

TEST_CASE("sgd steps", "[optim]") {
  SECTION("zero features leave the unregularized model alone") {
    Example z;
    z.label = +1;
    Vector w{1.0, 2.0};
    sgd_step(w, z, 0.5, 0.0);
    CHECK(w == Vector{1.0, 2.0});
  }
  SECTION("zero step size is a no-op") {
    Example z;
    z.label = -1;
    z.features = {{1, 2.0}};
    Vector w{1.0};
    sgd_step(w, z, 0.0, 0.1);
    CHECK(w == Vector{1.0});
  }
  SECTION("counter charges one access per step") {
    EvalCounter c;
    Example z;
    z.label = +1;
    z.features = {{1, 1.0}};
    Vector w{0.0};
    for (int i = 0; i < 9; ++i) sgd_step(w, z, 0.01, 0.1, &c);
    CHECK(c.example_accesses == 9);
  }
  SECTION("a tuned epoch beats the zero model") {
    const Dataset ds = generate_synthetic(kSpec);
    const PermutedView v(ds, 1);
    EvalCounter c;
    const LogisticObjective obj(prefix(v, ds.size()), kLambda, &c);
    const std::size_t chunk = ds.size() / 10;
    const LogisticObjective chunk_obj(prefix(v, chunk), kLambda, &c);
    double best_eta = 0.0, best = std::numeric_limits<double>::infinity();
    for (double eta : {1.0, 0.1, 0.01, 0.001}) {
      Vector w(ds.dim, 0.0);
      for (std::size_t i = 0; i < chunk; ++i) sgd_step(w, v.at(i), eta, kLambda, &c);
      const double val = chunk_obj.value(w);
      if (val < best) {
        best = val;
        best_eta = eta;
      }
    }
    Vector w(ds.dim, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i)
      sgd_step(w, v.at(i), best_eta, kLambda, &c);
    CHECK(obj.value(w) < std::log(2.0));
  }
}

TEST_CASE("reference minimizer honors its contract", "[optim]") {
  SECTION("large lambda converges immediately to a tight gradient") {
    const Dataset ds = generate_synthetic({100, 10, 0.5, 10.0, 2});
    const PermutedView v(ds, 2);
    EvalCounter c;
    const LogisticObjective obj(prefix(v, 100), 1e3, &c);
    const ReferenceSolution sol = reference_minimize(obj, 1e-10);
    CHECK(sol.grad_norm <= 1e-10);
    CHECK(norm(sol.weights) < 1e-3);  // regularizer dominates
  }
  SECTION("repeat solves are bit-identical") {
    Fixture f;
    const ReferenceSolution a = reference_minimize(f.obj, 1e-10);
    const ReferenceSolution b = reference_minimize(f.obj, 1e-10);
    CHECK(a.weights == b.weights);
    CHECK(a.value == b.value);
  }
  SECTION("no random model beats the reference") {
    Fixture f;
    const ReferenceSolution sol = reference_minimize(f.obj, 1e-10);
    SeededRng rng(41);
    for (int probe = 0; probe < 1000; ++probe) {
      Vector w(f.obj.dim());
      const double scale = rng.next_unit() * 3.0;
      for (double& x : w) x = scale * rng.next_gaussian();
      REQUIRE(f.obj.value(w) - sol.value >= -1e-9);
    }
  }
  SECTION("iteration cap raises an error") {
    Fixture f;
    CHECK_THROWS_AS(reference_minimize(f.obj, 1e-10, 3), Error);
  }
}
