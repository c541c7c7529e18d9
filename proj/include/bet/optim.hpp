#ifndef BET_OPTIM_HPP
#define BET_OPTIM_HPP

#include <cmath>
#include <concepts>
#include <cstddef>
#include <deque>
#include <limits>
#include <string>
#include <utility>

#include "bet/objective.hpp"
#include "bet/vec.hpp"

namespace bet {

/// Anything the batch optimizers can minimize: value and gradient plus a
/// one-dimensional ray restriction for the line search. Ray evals return
/// {phi, dphi, ddphi} at a step along the fixed direction.
template <typename T>
concept ObjectiveFn = requires(const T& f, const Vector& w, const Vector& d, Vector& g) {
  { f.dim() } -> std::convertible_to<std::size_t>;
  { f.value(w) } -> std::convertible_to<double>;
  { f.value_and_gradient(w, g) } -> std::convertible_to<double>;
  f.ray(w, d);
};

enum class OptimizerKind { GradientDescent, NonlinearCg, Lbfgs };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::GradientDescent: return "gd";
    case OptimizerKind::NonlinearCg: return "ncg";
    case OptimizerKind::Lbfgs: return "lbfgs";
  }
  return "?";
}

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "gd") return OptimizerKind::GradientDescent;
  if (s == "ncg" || s == "cg") return OptimizerKind::NonlinearCg;
  if (s == "lbfgs") return OptimizerKind::Lbfgs;
  throw Error("unknown optimizer kind '" + s + "' (expected gd|ncg|lbfgs)");
}

// ---------------------------------------------------------------------------
// Exact line search: safeguarded 1-D Newton on phi'(a) = 0
// ---------------------------------------------------------------------------

struct LineSearchOptions {
  double rel_dphi_tol = 1e-10;  // stop at |phi'(a)| <= tol * |phi'(0)|
  int max_iters = 50;
  double initial_step = 1.0;
};

struct LineSearchResult {
  double alpha = 0.0;   // 0 means no improving step was found
  double value = 0.0;   // phi(alpha), never above phi(0)
  double dphi = 0.0;
  int evals = 0;        // 1-D evaluations performed
  bool converged = false;
};

/// Minimizes phi over the ray given phi(0) and phi'(0) < 0. Newton steps on
/// phi' with a bracket safeguard: the right end expands until phi' turns
/// positive, then out-of-bracket Newton proposals fall back to bisection.
/// Returns the best evaluated point, so the result never increases phi.
template <typename RayT>
LineSearchResult minimize_ray(RayT& ray, double phi0, double dphi0,
                              const LineSearchOptions& opt = {}) {
  if (!(dphi0 < 0.0))
    throw Error("line search: not a descent direction (phi'(0) = " +
                std::to_string(dphi0) + ")");
  const double tol = opt.rel_dphi_tol * std::fabs(dphi0);

  LineSearchResult best;
  best.alpha = 0.0;
  best.value = phi0;
  best.dphi = dphi0;

  double lo = 0.0;
  double hi = 0.0;
  bool have_hi = false;
  double alpha = opt.initial_step;

  for (int it = 0; it < opt.max_iters; ++it) {
    const auto p = ray.eval(alpha);
    ++best.evals;
    const bool finite = std::isfinite(p.phi) && std::isfinite(p.dphi);
    if (finite && (p.phi < best.value ||
                   (p.phi == best.value && std::fabs(p.dphi) < std::fabs(best.dphi)))) {
      best.alpha = alpha;
      best.value = p.phi;
      best.dphi = p.dphi;
    }
    if (finite && std::fabs(p.dphi) <= tol) {
      best.converged = true;
      return best;
    }
    if (!finite || p.dphi > 0.0) {
      hi = alpha;
      have_hi = true;
    } else {
      lo = alpha;
    }

    double next;
    if (have_hi) {
      next = (finite && p.ddphi > 0.0) ? alpha - p.dphi / p.ddphi
                                       : 0.5 * (lo + hi);
      if (!std::isfinite(next) || !(next > lo && next < hi))
        next = 0.5 * (lo + hi);
    } else {
      next = (finite && p.ddphi > 0.0) ? alpha - p.dphi / p.ddphi : 2.0 * alpha;
      if (!std::isfinite(next) || next <= alpha) next = 2.0 * alpha;
      // flat-tail Newton proposals can explode; cap the expansion per round
      next = std::min(next, 100.0 * alpha);
    }
    alpha = next;
  }
  return best;
}

/// Standalone exact line search. Evaluates the gradient at w (one batch
/// pass) to check the descent precondition, then minimizes along d.
template <ObjectiveFn O>
LineSearchResult exact_line_search(const O& obj, const Vector& w, const Vector& d,
                                   const LineSearchOptions& opt = {}) {
  Vector g;
  const double f0 = obj.value_and_gradient(w, g);
  const double dphi0 = dot(g, d);
  if (!(dphi0 < 0.0))
    throw Error("line search: not a descent direction (phi'(0) = " +
                std::to_string(dphi0) + ")");
  auto ray = obj.ray(w, d);
  return minimize_ray(ray, f0, dphi0, opt);
}

// ---------------------------------------------------------------------------
// Direction rules
// ---------------------------------------------------------------------------

/// Fletcher-Reeves memory: the previous direction and gradient norm.
struct NcgState {
  Vector prev_dir;
  double prev_gnorm2 = 0.0;
  bool has_prev = false;

  void reset() { *this = NcgState{}; }
};

/// Fletcher-Reeves direction: -g on the first call, else -g + beta * d_prev
/// with beta = ||g||^2 / ||g_prev||^2, restarting to -g if descent is lost.
inline Vector ncg_direction(NcgState& st, const Vector& g) {
  const double gnorm2 = squared_norm(g);
  Vector d(g.size());
  bool fresh = !st.has_prev || !(st.prev_gnorm2 > 0.0);
  if (fresh) {
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
  } else {
    const double beta = gnorm2 / st.prev_gnorm2;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i] + beta * st.prev_dir[i];
    if (dot(g, d) >= 0.0)
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
  }
  st.prev_dir = d;
  st.prev_gnorm2 = gnorm2;
  st.has_prev = true;
  return d;
}

struct LbfgsPair {
  Vector s, y;
  double rho = 0.0;  // 1 / <y,s>
};

/// Curvature-pair ring buffer plus the point/gradient pending from the last
/// accepted step (the pair is completed by the next update's gradient).
struct LbfgsState {
  std::size_t memory = 10;
  std::deque<LbfgsPair> pairs;
  bool has_pending = false;
  Vector pending_w, pending_g;

  void reset() {
    pairs.clear();
    has_pending = false;
    pending_w.clear();
    pending_g.clear();
  }
};

/// Stores (s, y) unless the curvature <y,s> is non-positive or negligible.
inline bool lbfgs_push_pair(LbfgsState& st, Vector s, Vector y) {
  const double sy = dot(s, y);
  if (!(sy > 1e-12 * norm(s) * norm(y))) return false;
  if (st.pairs.size() >= st.memory) st.pairs.pop_front();
  st.pairs.push_back({std::move(s), std::move(y), 1.0 / sy});
  return true;
}

/// Two-loop recursion with the usual <s,y>/<y,y> initial scaling from the
/// most recent pair; empty memory falls back to -g.
inline Vector lbfgs_direction(const LbfgsState& st, const Vector& g) {
  Vector q = g;
  if (st.pairs.empty()) {
    for (double& v : q) v = -v;
    return q;
  }
  const std::size_t k = st.pairs.size();
  std::vector<double> alpha(k);
  for (std::size_t i = k; i-- > 0;) {
    const LbfgsPair& p = st.pairs[i];
    alpha[i] = p.rho * dot(p.s, q);
    axpy(-alpha[i], p.y, q);
  }
  const LbfgsPair& last = st.pairs.back();
  const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
  scale(gamma, q);
  for (std::size_t i = 0; i < k; ++i) {
    const LbfgsPair& p = st.pairs[i];
    const double beta = p.rho * dot(p.y, q);
    axpy(alpha[i] - beta, p.s, q);
  }
  for (double& v : q) v = -v;
  return q;
}

// ---------------------------------------------------------------------------
// The update step shared by every driver
// ---------------------------------------------------------------------------

struct OptimizerOptions {
  std::size_t lbfgs_memory = 10;
  LineSearchOptions line_search;
  double grad_floor = 1e-14;  // below this the iterate counts as stationary
};

struct UpdateResult {
  double value_before = 0.0;
  double value_after = 0.0;
  double grad_norm = 0.0;  // at the starting point
  double step = 0.0;
  int ls_evals = 0;        // 1-D evaluations; total cost is (1 + ls_evals) * n
  bool converged = false;  // gradient under the floor, model unchanged
};

/// One inner optimizer behind a single update interface. An update is one
/// gradient pass plus an exact line search along the chosen direction; the
/// returned value never exceeds the starting value. All state is owned
/// here, so copies fork the optimizer memory.
class InnerOptimizer {
 public:
  explicit InnerOptimizer(OptimizerKind kind, OptimizerOptions opts = {})
      : kind_(kind), opts_(opts) {
    lbfgs_.memory = opts.lbfgs_memory;
  }

  OptimizerKind kind() const { return kind_; }
  const OptimizerOptions& options() const { return opts_; }
  const NcgState& ncg_state() const { return ncg_; }
  const LbfgsState& lbfgs_state() const { return lbfgs_; }

  /// Drop all accumulated memory.
  void reset() {
    ncg_.reset();
    lbfgs_.reset();
  }

  /// The objective this optimizer runs on is about to change (batch
  /// expansion). Accumulated memory is kept -- direction quality recovers
  /// within a step or two -- but a pending L-BFGS pair would mix gradients
  /// of two different objectives, so it is dropped.
  void on_objective_changed() {
    lbfgs_.has_pending = false;
  }

  template <ObjectiveFn O>
  UpdateResult update(const O& obj, Vector& w) {
    UpdateResult res;
    Vector g;
    res.value_before = obj.value_and_gradient(w, g);
    if (!all_finite(g) || !std::isfinite(res.value_before))
      throw Error("update: non-finite objective or gradient");
    res.grad_norm = norm(g);
    if (res.grad_norm < opts_.grad_floor) {
      res.value_after = res.value_before;
      res.converged = true;
      return res;
    }

    if (kind_ == OptimizerKind::Lbfgs && lbfgs_.has_pending) {
      Vector s(w.size()), y(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        s[i] = w[i] - lbfgs_.pending_w[i];
        y[i] = g[i] - lbfgs_.pending_g[i];
      }
      lbfgs_push_pair(lbfgs_, std::move(s), std::move(y));
      lbfgs_.has_pending = false;
    }

    Vector d;
    switch (kind_) {
      case OptimizerKind::GradientDescent:
        d.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
        break;
      case OptimizerKind::NonlinearCg:
        d = ncg_direction(ncg_, g);
        break;
      case OptimizerKind::Lbfgs:
        d = lbfgs_direction(lbfgs_, g);
        break;
    }
    double dphi0 = dot(g, d);
    if (!(dphi0 < 0.0)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
      dphi0 = -res.grad_norm * res.grad_norm;
    }

    auto ray = obj.ray(w, d);
    const LineSearchResult ls = minimize_ray(ray, res.value_before, dphi0, opts_.line_search);
    res.step = ls.alpha;
    res.ls_evals = ls.evals;
    res.value_after = ls.value;
    if (ls.alpha > 0.0) {
      if (kind_ == OptimizerKind::Lbfgs) {
        lbfgs_.pending_w = w;
        lbfgs_.pending_g = std::move(g);
        lbfgs_.has_pending = true;
      }
      axpy(ls.alpha, d, w);
    }
    return res;
  }

 private:
  OptimizerKind kind_;
  OptimizerOptions opts_;
  NcgState ncg_;
  LbfgsState lbfgs_;
};

// ---------------------------------------------------------------------------
// Stochastic step and the reference oracle
// ---------------------------------------------------------------------------

/// Single-example stochastic gradient step w <- w - eta (grad l_z(w) + lambda w).
/// Charges one example access.
inline void sgd_step(Vector& w, const Example& z, double eta, double lambda,
                     EvalCounter* counter = nullptr) {
  const double margin = detail::sparse_dot(w, z);
  const double coeff = -z.label * sigmoid(-z.label * margin);
  if (lambda != 0.0 && eta != 0.0) scale(1.0 - eta * lambda, w);
  for (const Feature& f : z.features) {
    const std::size_t j = f.index - 1;
    if (j < w.size()) w[j] -= eta * coeff * f.value;
  }
  if (counter) counter->add(1);
}

struct ReferenceSolution {
  Vector weights;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

/// High-precision minimizer used only for measurement: L-BFGS (memory 20)
/// with exact line search from zero, run until the gradient norm is at most
/// grad_tol. Deterministic, so repeated calls are bit-identical.
template <ObjectiveFn O>
ReferenceSolution reference_minimize(const O& obj, double grad_tol = 1e-10,
                                     std::size_t max_iters = 50000) {
  if (!(grad_tol > 0.0)) throw Error("reference_minimize: grad_tol must be positive");
  OptimizerOptions opts;
  opts.lbfgs_memory = 20;
  opts.grad_floor = grad_tol;
  InnerOptimizer opt(OptimizerKind::Lbfgs, opts);
  Vector w(obj.dim(), 0.0);
  double last_grad = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iters; ++it) {
    const UpdateResult r = opt.update(obj, w);
    last_grad = r.grad_norm;
    if (r.converged) return {std::move(w), r.value_before, r.grad_norm, it};
  }
  throw Error("reference_minimize: iteration cap " + std::to_string(max_iters) +
              " reached, final grad norm " + std::to_string(last_grad));
}

}  // namespace bet

#endif  // BET_OPTIM_HPP
