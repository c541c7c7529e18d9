#ifndef BET_DRIVERS_HPP
#define BET_DRIVERS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bet/data.hpp"
#include "bet/hash.hpp"
#include "bet/metrics.hpp"
#include "bet/objective.hpp"
#include "bet/optim.hpp"

namespace bet {

// ---------------------------------------------------------------------------
// Run configuration shared by the drivers
// ---------------------------------------------------------------------------

/// Batch growth rule: n -> min(factor * n, N).
struct ExpansionSchedule {
  std::size_t n0 = 64;
  std::size_t factor = 2;

  std::size_t next(std::size_t n, std::size_t cap) const {
    const std::size_t grown = n * factor;
    return grown < cap ? grown : cap;
  }
};

struct Stopping {
  double grad_tol = 1e-8;
  std::uint64_t budget_accesses = std::numeric_limits<std::uint64_t>::max();
  std::optional<double> target_log_rfvd;  // needs a reference value to act
  std::size_t max_updates_per_stage = 10000;
};

struct MetricsOptions {
  std::size_t cadence = 1;  // rows every this many updates
  std::optional<double> reference_value;  // full-data optimum value, for log RFVD
  const Dataset* test_data = nullptr;
  bool with_au_prc = false;
};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct CostValue {
  std::uint64_t cost = 0;
  double value = 0.0;
};

/// Everything needed to replay one stage's expansion decision: the big
/// track's (cost, value) history with the stage-start entry at cost zero,
/// and per step the small track's cost and its value on the big batch.
struct StageSwitchLog {
  std::uint32_t stage = 0;
  std::uint64_t big_n = 0, small_n = 0;
  std::vector<CostValue> big_history;
  std::vector<CostValue> small_checks;
  std::size_t decided_at = 0;  // step index that triggered expansion; 0 = none
  std::uint64_t handoff_from = 0;  // model hashes around the expansion
  std::uint64_t handoff_big = 0, handoff_small = 0;
};

struct OptimalStageInfo {
  std::size_t index = 0;       // zero-based stage counter
  std::size_t batch_n = 0;     // prefix trained on in this stage
  double epsilon_before = 0.0; // tolerance on entry
  double epsilon_after = 0.0;
  std::uint64_t accesses = 0;  // optimizer accesses spent in the stage
  std::uint64_t passes = 0;    // gradient+line-search passes; accesses == passes * batch_n
  std::optional<double> gap_start;  // optimization gap of the carried-in model on this prefix
  std::optional<double> gap_end;    // gap of the stage's final model on this prefix
};

struct RunRecord {
  std::vector<MetricsRow> rows;
  std::string config_fingerprint;
  std::uint64_t total_accesses = 0;       // optimizer work only
  std::uint64_t scheduler_accesses = 0;   // two-track switch-test evaluations
  std::uint64_t tuning_accesses = 0;      // SGD step-size tuning
  std::uint64_t measurement_accesses = 0; // metrics/reference work, never charged
  std::vector<std::pair<std::uint32_t, std::uint64_t>> expansion_points;
  std::vector<std::uint64_t> stage_accesses;  // optimizer accesses per stage
  std::vector<StageSwitchLog> switch_logs;
  std::vector<OptimalStageInfo> optimal_stages;
  std::optional<double> initial_gap;  // optimal-BET: gap of w0 on the first prefix
  Vector final_model;
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  double final_grad_norm = std::numeric_limits<double>::quiet_NaN();
  std::string termination;
};

/// A driver failure that still carries the rows recorded so far.
class RunError : public Error {
 public:
  RunError(const std::string& what, RunRecord partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunRecord& partial() const { return partial_; }

 private:
  RunRecord partial_;
};

// ---------------------------------------------------------------------------
// Two-track switch condition
// ---------------------------------------------------------------------------

/// Decides whether the big track has overtaken the small one at equal cost.
/// big_history[0] must be the stage-start entry at cost zero; s1 is the
/// largest index whose recorded cost is at most small_cost, and the switch
/// fires iff that entry's value is strictly below the small track's value
/// on the big batch.
inline bool check_switch(std::span<const CostValue> big_history,
                         std::uint64_t small_cost, double small_value_on_big) {
  if (big_history.empty()) throw Error("check_switch: empty history");
  std::size_t s1 = 0;
  for (std::size_t i = big_history.size(); i-- > 0;) {
    if (big_history[i].cost <= small_cost) {
      s1 = i;
      break;
    }
  }
  return big_history[s1].value < small_value_on_big;
}

// ---------------------------------------------------------------------------
// Shared driver internals
// ---------------------------------------------------------------------------

namespace detail {

class RunMonitor {
 public:
  RunMonitor(const PermutedView& view, double lambda, const MetricsOptions& m,
             RunRecord& rec, EvalCounter& measurement)
      : metrics_(m),
        rec_(&rec),
        full_obj_(prefix(view, view.size()), lambda, &measurement),
        start_(std::chrono::steady_clock::now()) {}

  /// Emits one metrics row. The objective column is always the full-data
  /// objective; pass its value when the caller already knows it (full-batch
  /// phases), otherwise it is measured here (never charged to the run).
  void emit(std::uint32_t stage, std::uint64_t batch_n, bool expansion,
            std::uint64_t accesses, const Vector& w,
            std::optional<double> known_full_value = std::nullopt) {
    MetricsRow row;
    row.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    row.accesses = accesses;
    row.objective_value = known_full_value ? *known_full_value : full_obj_.value(w);
    if (metrics_.reference_value)
      row.log_rfvd = log_rfvd(row.objective_value, *metrics_.reference_value);
    if (metrics_.test_data) {
      row.test_accuracy = accuracy(w, *metrics_.test_data);
      if (metrics_.with_au_prc) {
        std::vector<int> labels;
        labels.reserve(metrics_.test_data->size());
        for (const Example& z : metrics_.test_data->examples) labels.push_back(z.label);
        row.au_prc = au_prc(score_examples(w, *metrics_.test_data), labels);
      }
    }
    row.stage = stage;
    row.batch_n = batch_n;
    row.expansion = expansion;
    last_log_rfvd_ = row.log_rfvd;
    rec_->rows.push_back(row);
  }

  bool target_reached(const Stopping& stop) const {
    return stop.target_log_rfvd && last_log_rfvd_ &&
           *last_log_rfvd_ <= *stop.target_log_rfvd;
  }

 private:
  MetricsOptions metrics_;
  RunRecord* rec_;
  LogisticObjective full_obj_;
  std::chrono::steady_clock::time_point start_;
  std::optional<double> last_log_rfvd_;
};

/// Runs one batch to the stopping rule; shared by the fixed-batch driver,
/// the last stage of schedule-driven runs, and the two-track final phase.
/// Returns the termination reason.
inline std::string run_batch_to_stop(const LogisticObjective& obj, InnerOptimizer& opt,
                                     Vector& w, std::uint32_t stage,
                                     const Stopping& stop, const MetricsOptions& metrics,
                                     RunMonitor& monitor, RunRecord& rec,
                                     const std::function<std::uint64_t()>& accesses,
                                     std::size_t& updates_done) {
  const std::uint64_t n = obj.batch_size();
  double recorded = std::numeric_limits<double>::infinity();
  bool row_pending = false;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  std::string why;
  while (true) {
    if (accesses() + n > stop.budget_accesses) {
      why = updates_done == 0 ? "budget exhausted before any update could run"
                              : "budget exhausted";
      break;
    }
    const UpdateResult r = opt.update(obj, w);
    ++updates_done;
    // recorded values are kept nonincreasing: near stagnation a fresh
    // evaluation can sit an ulp above the previous line-search value
    recorded = std::min(recorded, r.value_after);
    grad_norm = r.grad_norm;
    row_pending = true;
    if (updates_done % metrics.cadence == 0) {
      monitor.emit(stage, n, false, accesses(), w, recorded);
      row_pending = false;
      if (monitor.target_reached(stop)) {
        why = "target log RFVD reached";
        break;
      }
    }
    if (r.converged || r.grad_norm <= stop.grad_tol) {
      why = "gradient tolerance reached";
      break;
    }
  }
  if (row_pending) monitor.emit(stage, n, false, accesses(), w, recorded);
  rec.final_grad_norm = grad_norm;
  return why;
}

inline void finish_record(RunRecord& rec) {
  if (!rec.rows.empty()) rec.final_objective = rec.rows.back().objective_value;
}

inline void validate_metrics(const MetricsOptions& m) {
  if (m.cadence < 1) throw Error("metrics cadence must be >= 1");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed-batch baseline
// ---------------------------------------------------------------------------

inline RunRecord run_fixed_batch(OptimizerKind kind, const OptimizerOptions& opts,
                                 const PermutedView& view, double lambda,
                                 const Stopping& stop, const MetricsOptions& metrics) {
  detail::validate_metrics(metrics);
  RunRecord rec;
  EvalCounter opt_counter, measurement;
  detail::RunMonitor monitor(view, lambda, metrics, rec, measurement);
  try {
    LogisticObjective obj(prefix(view, view.size()), lambda, &opt_counter);
    InnerOptimizer opt(kind, opts);
    Vector w(view.dim(), 0.0);
    std::size_t updates = 0;
    const auto accesses = [&] { return opt_counter.example_accesses; };
    rec.termination = detail::run_batch_to_stop(obj, opt, w, 1, stop, metrics, monitor,
                                                rec, accesses, updates);
    if (updates == 0) rec.termination += " (zero updates)";
    rec.total_accesses = opt_counter.example_accesses;
    rec.stage_accesses = {opt_counter.example_accesses};
    rec.measurement_accesses = measurement.example_accesses;
    rec.final_model = std::move(w);
    detail::finish_record(rec);
    return rec;
  } catch (RunError&) {
    throw;
  } catch (const Error& e) {
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    throw RunError(e.what(), std::move(rec));
  }
}

// ---------------------------------------------------------------------------
// Simple fixed-iteration expansion
// ---------------------------------------------------------------------------

/// Runs a fixed number of updates per stage on an exponentially growing
/// prefix; once the prefix covers the dataset the last stage runs to the
/// stopping rule like a fixed-batch run.
inline RunRecord run_simple_bet(OptimizerKind kind, const OptimizerOptions& opts,
                                const ExpansionSchedule& schedule,
                                std::size_t iters_per_stage, const PermutedView& view,
                                double lambda, const Stopping& stop,
                                const MetricsOptions& metrics) {
  if (iters_per_stage < 1) throw Error("run_simple_bet: iters_per_stage must be >= 1");
  if (schedule.n0 < 1 || schedule.n0 > view.size())
    throw Error("run_simple_bet: n0 out of range");
  if (schedule.factor < 2) throw Error("run_simple_bet: factor must be >= 2");
  detail::validate_metrics(metrics);

  RunRecord rec;
  EvalCounter opt_counter, measurement;
  detail::RunMonitor monitor(view, lambda, metrics, rec, measurement);
  const std::size_t N = view.size();
  const auto accesses = [&] { return opt_counter.example_accesses; };
  try {
    InnerOptimizer opt(kind, opts);
    Vector w(view.dim(), 0.0);
    std::size_t updates = 0;
    std::uint32_t stage = 1;
    std::size_t n = schedule.n0;
    std::uint64_t stage_base = 0;
    bool stopped = false;
    while (n < N && !stopped) {
      LogisticObjective obj(prefix(view, n), lambda, &opt_counter);
      for (std::size_t i = 0; i < iters_per_stage; ++i) {
        if (accesses() + n > stop.budget_accesses) {
          rec.termination = "budget exhausted";
          stopped = true;
          break;
        }
        opt.update(obj, w);
        ++updates;
        if (updates % metrics.cadence == 0) {
          monitor.emit(stage, n, false, accesses(), w);
          if (monitor.target_reached(stop)) {
            rec.termination = "target log RFVD reached";
            stopped = true;
            break;
          }
        }
      }
      if (stopped) break;
      rec.stage_accesses.push_back(accesses() - stage_base);
      stage_base = accesses();
      n = schedule.next(n, N);
      ++stage;
      opt.on_objective_changed();
      rec.expansion_points.emplace_back(stage, accesses());
      monitor.emit(stage, n, true, accesses(), w);
      if (monitor.target_reached(stop)) {
        rec.termination = "target log RFVD reached";
        stopped = true;
      }
    }
    if (stopped) {
      rec.stage_accesses.push_back(accesses() - stage_base);
      if (rec.rows.empty() || rec.rows.back().accesses != accesses())
        monitor.emit(stage, n, false, accesses(), w);
    } else {
      LogisticObjective obj(prefix(view, N), lambda, &opt_counter);
      rec.termination = detail::run_batch_to_stop(obj, opt, w, stage, stop, metrics,
                                                  monitor, rec, accesses, updates);
      rec.stage_accesses.push_back(accesses() - stage_base);
    }
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    rec.final_model = std::move(w);
    detail::finish_record(rec);
    return rec;
  } catch (RunError&) {
    throw;
  } catch (const Error& e) {
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    throw RunError(e.what(), std::move(rec));
  }
}

// ---------------------------------------------------------------------------
// Two-track expansion
// ---------------------------------------------------------------------------

/// Parameter-free expansion scheduling: a big track on batch n and a small
/// track on the previous batch run in strict alternation from the same
/// starting model; the batch doubles as soon as the big track's recorded
/// value at matched cost beats the small track's value on the big batch.
/// Switch-test evaluations are charged to the scheduler counter, not to
/// either track.
inline RunRecord run_two_track(OptimizerKind kind, const OptimizerOptions& opts,
                               const ExpansionSchedule& schedule,
                               const PermutedView& view, double lambda,
                               const Stopping& stop, const MetricsOptions& metrics,
                               bool carry_memory = true) {
  const std::size_t N = view.size();
  if (schedule.n0 < 2) throw Error("run_two_track: n0 must be >= 2");
  if (schedule.n0 >= N) throw Error("run_two_track: n0 must be < N");
  detail::validate_metrics(metrics);

  RunRecord rec;
  EvalCounter big_counter, small_counter, sched_counter, measurement;
  detail::RunMonitor monitor(view, lambda, metrics, rec, measurement);
  const auto accesses = [&] {
    return big_counter.example_accesses + small_counter.example_accesses;
  };
  try {
    std::size_t n_small = schedule.n0;
    std::size_t n_big = schedule.next(n_small, N);
    InnerOptimizer big_opt(kind, opts), small_opt(kind, opts);
    Vector w_big(view.dim(), 0.0), w_small(view.dim(), 0.0);
    std::uint32_t stage = 1;
    std::size_t s = 0;
    std::size_t updates = 0;  // big-track updates drive the cadence
    std::uint64_t stage_base = 0, big_base = 0, small_base = 0;
    std::vector<CostValue> big_history;
    bool stopped = false;

    if (n_big < N) {
      rec.switch_logs.push_back({stage, n_big, n_small, {}, {}, 0, 0, 0, 0});
    }
    while (n_big < N && !stopped) {
      LogisticObjective big_obj(prefix(view, n_big), lambda, &big_counter);
      LogisticObjective small_obj(prefix(view, n_small), lambda, &small_counter);
      LogisticObjective sched_obj(prefix(view, n_big), lambda, &sched_counter);
      bool expanded = false;
      while (!expanded) {
        if (accesses() + n_big + n_small > stop.budget_accesses) {
          rec.termination = "budget exhausted";
          stopped = true;
          break;
        }
        const UpdateResult ub = big_opt.update(big_obj, w_big);
        if (big_history.empty()) big_history.push_back({0, ub.value_before});
        const double rec_value = std::min(ub.value_after, big_history.back().value);
        big_history.push_back({big_counter.example_accesses - big_base, rec_value});

        const UpdateResult us = small_opt.update(small_obj, w_small);
        (void)us;
        const std::uint64_t small_cost = small_counter.example_accesses - small_base;
        ++s;

        const double small_on_big = sched_obj.value(w_small);
        StageSwitchLog& log = rec.switch_logs.back();
        log.small_checks.push_back({small_cost, small_on_big});
        const bool expand = check_switch(big_history, small_cost, small_on_big);

        ++updates;
        if (updates % metrics.cadence == 0) {
          monitor.emit(stage, n_big, false, accesses(), w_big);
          if (monitor.target_reached(stop)) {
            rec.termination = "target log RFVD reached";
            stopped = true;
            break;
          }
        }

        if (expand) {
          log.big_history = big_history;
          log.decided_at = s;
          log.handoff_from = hash_vector(w_big);
          w_small = w_big;
          small_opt = big_opt;
          if (!carry_memory) {
            big_opt.reset();
            small_opt.reset();
          }
          big_opt.on_objective_changed();  // big moves to a doubled batch
          log.handoff_big = hash_vector(w_big);
          log.handoff_small = hash_vector(w_small);

          rec.stage_accesses.push_back(accesses() - stage_base);
          stage_base = accesses();
          big_base = big_counter.example_accesses;
          small_base = small_counter.example_accesses;
          n_small = n_big;
          n_big = schedule.next(n_big, N);
          ++stage;
          s = 0;
          big_history.clear();
          rec.expansion_points.emplace_back(stage, accesses());
          monitor.emit(stage, n_big, true, accesses(), w_big);
          if (monitor.target_reached(stop)) {
            rec.termination = "target log RFVD reached";
            stopped = true;
          }
          if (n_big < N && !stopped)
            rec.switch_logs.push_back({stage, n_big, n_small, {}, {}, 0, 0, 0, 0});
          expanded = true;
        } else if (s >= stop.max_updates_per_stage) {
          rec.total_accesses = accesses();
          rec.scheduler_accesses = sched_counter.example_accesses;
          rec.measurement_accesses = measurement.example_accesses;
          rec.final_model = w_big;
          throw RunError("run_two_track: stage " + std::to_string(stage) + " exceeded " +
                             std::to_string(stop.max_updates_per_stage) +
                             " updates without switching",
                         std::move(rec));
        }
      }
    }

    // keep the unfinished stage's history observable
    if (!rec.switch_logs.empty() && rec.switch_logs.back().decided_at == 0 &&
        rec.switch_logs.back().big_history.empty())
      rec.switch_logs.back().big_history = big_history;

    if (stopped) {
      rec.stage_accesses.push_back(accesses() - stage_base);
      if (rec.rows.empty() || rec.rows.back().accesses != accesses())
        monitor.emit(stage, n_big, false, accesses(), w_big);
    } else {
      LogisticObjective obj(prefix(view, N), lambda, &big_counter);
      rec.termination = detail::run_batch_to_stop(obj, big_opt, w_big, stage, stop,
                                                  metrics, monitor, rec, accesses, updates);
      rec.stage_accesses.push_back(accesses() - stage_base);
    }
    rec.total_accesses = accesses();
    rec.scheduler_accesses = sched_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    rec.final_model = std::move(w_big);
    detail::finish_record(rec);
    return rec;
  } catch (RunError&) {
    throw;
  } catch (const Error& e) {
    rec.total_accesses = accesses();
    rec.scheduler_accesses = sched_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    throw RunError(e.what(), std::move(rec));
  }
}

// ---------------------------------------------------------------------------
// Fixed-parameter expansion with tolerance halving
// ---------------------------------------------------------------------------

struct OptimalBetParams {
  double epsilon = 0.0;   // target tolerance
  double epsilon0 = 0.0;  // initial tolerance, >= epsilon
  std::size_t n0 = 0;
  double kappa = 0.0;     // inner optimizer rate constant, > 0
  bool compute_stage_gaps = true;
  double reference_grad_tol = 1e-10;

  std::size_t kappa_hat() const {
    return static_cast<std::size_t>(std::ceil(kappa * std::log(6.0)));
  }

  /// Number of stages implied by the halving loop.
  std::size_t stage_count() const {
    std::size_t t = 0;
    double eps = epsilon0;
    while (3.0 * eps > epsilon) {
      eps /= 2.0;
      ++t;
      if (t > 64) throw Error("optimal-bet: tolerance loop exceeds 64 stages");
    }
    return t;
  }

  void validate() const {
    if (!(epsilon > 0.0)) throw Error("optimal-bet: epsilon must be positive");
    if (!(epsilon0 >= epsilon)) throw Error("optimal-bet: epsilon0 must be >= epsilon");
    if (n0 < 1) throw Error("optimal-bet: n0 must be >= 1");
    if (!(kappa > 0.0)) throw Error("optimal-bet: kappa must be positive");
  }
};

using ReferenceProvider = std::function<ReferenceSolution(std::size_t prefix_n)>;

/// Runs exactly ceil(kappa ln 6) updates per stage on a doubling prefix,
/// halving the tolerance each stage until 3 eps_t <= eps. Per-stage gaps
/// against prefix optima are measurement only: computed with a separate
/// counter and never charged to the run.
inline RunRecord run_optimal_bet(OptimizerKind kind, const OptimizerOptions& opts,
                                 const OptimalBetParams& params,
                                 const PermutedView& view, double lambda,
                                 const MetricsOptions& metrics,
                                 const ReferenceProvider& reference = {},
                                 std::size_t metrics_cadence_updates = 0) {
  params.validate();
  detail::validate_metrics(metrics);
  const std::size_t T = params.stage_count();
  const std::size_t N = view.size();
  {
    std::size_t need = params.n0;
    for (std::size_t t = 0; t < T; ++t) {
      need *= 2;
      if (need > N)
        throw Error("run_optimal_bet: " + std::to_string(T) + " stages from n0=" +
                    std::to_string(params.n0) + " need N >= " + std::to_string(need) +
                    ", dataset has " + std::to_string(N));
    }
  }

  RunRecord rec;
  EvalCounter opt_counter, measurement;
  detail::RunMonitor monitor(view, lambda, metrics, rec, measurement);
  std::map<std::size_t, ReferenceSolution> ref_cache;
  const auto prefix_reference = [&](std::size_t n) -> const ReferenceSolution& {
    auto it = ref_cache.find(n);
    if (it == ref_cache.end()) {
      ReferenceSolution sol =
          reference ? reference(n)
                    : reference_minimize(
                          LogisticObjective(prefix(view, n), lambda, &measurement),
                          params.reference_grad_tol);
      it = ref_cache.emplace(n, std::move(sol)).first;
    }
    return it->second;
  };

  try {
    InnerOptimizer opt(kind, opts);
    Vector w(view.dim(), 0.0);
    const std::size_t kappa_hat = params.kappa_hat();
    double eps = params.epsilon0;
    std::size_t n = params.n0;
    std::size_t updates = 0;

    if (params.compute_stage_gaps) {
      LogisticObjective first_obj(prefix(view, params.n0), lambda, &measurement);
      rec.initial_gap = opt_gap(first_obj, w, prefix_reference(params.n0).value);
    }

    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t n_next = n * 2;
      LogisticObjective obj(prefix(view, n_next), lambda, &opt_counter);
      const std::uint64_t stage_base = opt_counter.example_accesses;
      if (t > 0) {
        opt.on_objective_changed();
        rec.expansion_points.emplace_back(static_cast<std::uint32_t>(t + 1),
                                          opt_counter.example_accesses);
        monitor.emit(static_cast<std::uint32_t>(t + 1), n_next, true,
                     opt_counter.example_accesses, w);
      }

      OptimalStageInfo info;
      info.index = t;
      info.batch_n = n_next;
      info.epsilon_before = eps;
      std::uint64_t passes = 0;
      for (std::size_t sidx = 0; sidx < kappa_hat; ++sidx) {
        const UpdateResult r = opt.update(obj, w);
        if (sidx == 0 && params.compute_stage_gaps) {
          // f(w_t) on the new prefix falls out of the first update for free
          double g = r.value_before - prefix_reference(n_next).value;
          info.gap_start = g < 0.0 ? 0.0 : g;
        }
        passes += 1 + static_cast<std::uint64_t>(r.ls_evals);
        ++updates;
        if (metrics_cadence_updates && updates % metrics_cadence_updates == 0)
          monitor.emit(static_cast<std::uint32_t>(t + 1), n_next, false,
                       opt_counter.example_accesses, w);
      }
      info.accesses = opt_counter.example_accesses - stage_base;
      info.passes = passes;
      if (params.compute_stage_gaps) {
        LogisticObjective meas_obj(prefix(view, n_next), lambda, &measurement);
        info.gap_end = opt_gap(meas_obj, w, prefix_reference(n_next).value);
      }
      rec.stage_accesses.push_back(info.accesses);
      rec.optimal_stages.push_back(info);

      n = n_next;
      eps /= 2.0;
      rec.optimal_stages.back().epsilon_after = eps;
    }

    monitor.emit(static_cast<std::uint32_t>(T), n, false,
                 opt_counter.example_accesses, w);
    rec.termination = "tolerance schedule complete";
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    rec.final_model = std::move(w);
    detail::finish_record(rec);
    return rec;
  } catch (RunError&) {
    throw;
  } catch (const Error& e) {
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    throw RunError(e.what(), std::move(rec));
  }
}

// ---------------------------------------------------------------------------
// Sequential SGD baseline
// ---------------------------------------------------------------------------

/// Tunes the step size on the first tenth of the permuted data (one pass
/// per candidate, charged as tuning), then runs sequential SGD over
/// reshuffled epochs until the epoch budget runs out. Metrics are sampled
/// once per epoch.
inline RunRecord run_sgd_baseline(const PermutedView& view, double lambda,
                                  const std::vector<double>& eta_grid,
                                  std::uint64_t budget_accesses,
                                  const MetricsOptions& metrics,
                                  std::uint64_t shuffle_seed,
                                  const Stopping& stop = {}) {
  if (eta_grid.empty()) throw Error("run_sgd_baseline: empty eta grid");
  detail::validate_metrics(metrics);
  const std::size_t N = view.size();

  RunRecord rec;
  EvalCounter opt_counter, measurement;
  detail::RunMonitor monitor(view, lambda, metrics, rec, measurement);
  try {
    const std::size_t chunk = std::max<std::size_t>(1, N / 10);
    // candidate passes are tuning cost; scoring the candidates is measurement
    LogisticObjective chunk_obj(prefix(view, chunk), lambda, &measurement);
    double best_eta = eta_grid.front();
    double best_value = std::numeric_limits<double>::infinity();
    for (double eta : eta_grid) {
      Vector w(view.dim(), 0.0);
      for (std::size_t i = 0; i < chunk; ++i)
        sgd_step(w, view.at(i), eta, lambda, &opt_counter);
      const double v = chunk_obj.value(w);
      if (std::isfinite(v) && v < best_value) {
        best_value = v;
        best_eta = eta;
      }
    }
    rec.tuning_accesses = opt_counter.example_accesses;

    Vector w(view.dim(), 0.0);
    SeededRng rng(shuffle_seed);
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    std::uint64_t epoch_accesses = 0;
    std::uint32_t epoch = 0;
    rec.termination = "budget exhausted";
    while (epoch_accesses < budget_accesses) {
      for (std::size_t i = N - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
        std::swap(order[i], order[j]);
      }
      for (std::size_t i = 0; i < N; ++i)
        sgd_step(w, view.at(order[i]), best_eta, lambda, &opt_counter);
      epoch_accesses += N;
      ++epoch;
      monitor.emit(epoch, N, false, opt_counter.example_accesses, w);
      if (monitor.target_reached(stop)) {
        rec.termination = "target log RFVD reached";
        break;
      }
    }
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    rec.final_model = std::move(w);
    rec.stage_accesses = {rec.total_accesses};
    detail::finish_record(rec);
    return rec;
  } catch (RunError&) {
    throw;
  } catch (const Error& e) {
    rec.total_accesses = opt_counter.example_accesses;
    rec.measurement_accesses = measurement.example_accesses;
    throw RunError(e.what(), std::move(rec));
  }
}

// ---------------------------------------------------------------------------
// Initial tolerance helper
// ---------------------------------------------------------------------------

/// eps0 = 2 K ln(ln(1/eps) / delta). K is supplied by the caller and
/// absorbs the problem constants (including the 1/lambda factor), so lambda
/// is validated but does not enter the value. K == 0 degenerates to 0.
inline double epsilon0_default(double lambda, double target_epsilon, double delta,
                               double constant_K) {
  if (!(lambda > 0.0)) throw Error("epsilon0_default: lambda must be positive");
  if (!(target_epsilon > 0.0 && target_epsilon < 1.0))
    throw Error("epsilon0_default: target epsilon must be in (0,1)");
  if (!(delta > 0.0)) throw Error("epsilon0_default: delta must be positive");
  if (constant_K < 0.0) throw Error("epsilon0_default: K must be nonnegative");
  if (constant_K == 0.0) {
    std::cerr << "epsilon0_default: K = 0 gives a degenerate epsilon0 of 0\n";
    return 0.0;
  }
  const double inner = std::log(1.0 / target_epsilon);
  if (inner <= delta)
    throw Error("epsilon0_default: ln(1/epsilon) <= delta leaves no positive tolerance");
  return 2.0 * constant_K * std::log(inner / delta);
}

}  // namespace bet

#endif  // BET_DRIVERS_HPP
