#ifndef BET_HARNESS_HPP
#define BET_HARNESS_HPP

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bet/drivers.hpp"
#include "bet/hash.hpp"

namespace bet {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class RunKind { Fixed, SimpleBet, TwoTrack, OptimalBet, Sgd };

inline std::string to_string(RunKind k) {
  switch (k) {
    case RunKind::Fixed: return "fixed";
    case RunKind::SimpleBet: return "simple-bet";
    case RunKind::TwoTrack: return "two-track";
    case RunKind::OptimalBet: return "optimal-bet";
    case RunKind::Sgd: return "sgd";
  }
  return "?";
}

inline RunKind run_kind_from_string(const std::string& s) {
  if (s == "fixed") return RunKind::Fixed;
  if (s == "simple-bet") return RunKind::SimpleBet;
  if (s == "two-track") return RunKind::TwoTrack;
  if (s == "optimal-bet") return RunKind::OptimalBet;
  if (s == "sgd") return RunKind::Sgd;
  throw Error("unknown run kind '" + s +
              "' (expected fixed|simple-bet|two-track|optimal-bet|sgd)");
}

/// Either a file on disk or a seeded synthetic spec.
struct DatasetSource {
  std::string path;  // empty when synthetic
  std::optional<SyntheticSpec> synthetic;

  bool is_synthetic() const { return synthetic.has_value(); }
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::optional<DatasetSource> test_dataset;
  bool monomial_expand_deg3 = false;
  std::size_t monomial_dim_cap = 1000000;

  std::uint64_t permutation_seed = 1;
  double lambda = 1e-6;

  OptimizerKind optimizer = OptimizerKind::Lbfgs;
  std::size_t lbfgs_memory = 10;
  bool carry_memory = true;

  RunKind run_kind = RunKind::Fixed;
  std::size_t n0 = 64;
  std::size_t factor = 2;
  std::size_t iters_per_stage = 10;
  std::uint64_t budget_accesses = std::numeric_limits<std::uint64_t>::max();
  std::size_t metrics_cadence = 1;
  double grad_tol = 1e-8;
  std::optional<double> target_log_rfvd;
  std::size_t max_updates_per_stage = 10000;

  // optimal-bet
  double epsilon = 1.0 / 64.0;
  double epsilon0 = 1.0;
  double kappa = 4.0;
  bool stage_gaps = true;

  // sgd
  std::vector<double> eta_grid = {1.0, 0.1, 0.01, 0.001};
  std::optional<std::uint64_t> sgd_shuffle_seed;  // default: permutation_seed + 1

  bool reference_enabled = true;
  double reference_grad_tol = 1e-10;
  std::size_t reference_max_iters = 50000;

  bool emit_test_accuracy = false;
  bool emit_au_prc = false;

  std::string output_dir = "out";
  std::string cache_dir;  // empty: BET_CACHE_DIR env or "reference-cache"
};

namespace detail {

inline DatasetSource parse_dataset_source(const json& j, const std::string& where) {
  DatasetSource src;
  if (j.contains("path")) {
    src.path = j.at("path").get<std::string>();
    if (!fs::exists(src.path))
      throw Error(where + ": dataset file '" + src.path + "' does not exist");
  } else if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    SyntheticSpec spec;
    spec.n_examples = s.at("n").get<std::size_t>();
    spec.dim = s.at("dim").get<std::size_t>();
    spec.sparsity = s.value("sparsity", 0.1);
    spec.separation = s.value("separation", 10.0);
    spec.seed = s.value("seed", std::uint64_t{1});
    src.synthetic = spec;
  } else {
    throw Error(where + ": expected either \"path\" or \"synthetic\"");
  }
  return src;
}

inline json dataset_source_json(const DatasetSource& src) {
  json j;
  if (src.is_synthetic()) {
    const SyntheticSpec& s = *src.synthetic;
    j["synthetic"] = {{"n", s.n_examples}, {"dim", s.dim},       {"sparsity", s.sparsity},
                      {"separation", s.separation}, {"seed", s.seed}};
  } else {
    j["path"] = src.path;
  }
  return j;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  if (!j.contains("dataset")) throw Error("config: missing \"dataset\"");
  cfg.dataset = detail::parse_dataset_source(j.at("dataset"), "config.dataset");
  if (j.contains("test_dataset"))
    cfg.test_dataset =
        detail::parse_dataset_source(j.at("test_dataset"), "config.test_dataset");
  cfg.monomial_expand_deg3 = j.value("monomial_expand_deg3", false);
  cfg.monomial_dim_cap = j.value("monomial_dim_cap", std::size_t{1000000});
  cfg.permutation_seed = j.value("permutation_seed", std::uint64_t{1});
  cfg.lambda = j.value("lambda", 1e-6);
  if (!(cfg.lambda > 0.0)) throw Error("config: lambda must be positive");

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    cfg.optimizer = optimizer_kind_from_string(o.value("kind", std::string("lbfgs")));
    cfg.lbfgs_memory = o.value("memory", std::size_t{10});
    cfg.carry_memory = o.value("carry_memory", true);
  }

  if (!j.contains("run")) throw Error("config: missing \"run\"");
  const json& r = j.at("run");
  cfg.run_kind = run_kind_from_string(r.value("kind", std::string("fixed")));
  cfg.n0 = r.value("n0", std::size_t{64});
  cfg.factor = r.value("factor", std::size_t{2});
  cfg.iters_per_stage = r.value("iters_per_stage", std::size_t{10});
  if (r.contains("budget_accesses"))
    cfg.budget_accesses = r.at("budget_accesses").get<std::uint64_t>();
  cfg.metrics_cadence = r.value("metrics_cadence", std::size_t{1});
  cfg.grad_tol = r.value("grad_tol", 1e-8);
  if (r.contains("target_log_rfvd") && !r.at("target_log_rfvd").is_null())
    cfg.target_log_rfvd = r.at("target_log_rfvd").get<double>();
  cfg.max_updates_per_stage = r.value("max_updates_per_stage", std::size_t{10000});
  cfg.epsilon = r.value("epsilon", 1.0 / 64.0);
  cfg.epsilon0 = r.value("epsilon0", 1.0);
  cfg.kappa = r.value("kappa", 4.0);
  cfg.stage_gaps = r.value("stage_gaps", true);
  if (r.contains("eta_grid")) cfg.eta_grid = r.at("eta_grid").get<std::vector<double>>();
  if (r.contains("sgd_shuffle_seed"))
    cfg.sgd_shuffle_seed = r.at("sgd_shuffle_seed").get<std::uint64_t>();

  if (j.contains("reference")) {
    const json& ref = j.at("reference");
    cfg.reference_enabled = ref.value("enabled", true);
    cfg.reference_grad_tol = ref.value("grad_tol", 1e-10);
    cfg.reference_max_iters = ref.value("max_iters", std::size_t{50000});
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    cfg.emit_test_accuracy = m.value("test_accuracy", false);
    cfg.emit_au_prc = m.value("au_prc", false);
  }
  cfg.output_dir = j.value("output_dir", std::string("out"));
  cfg.cache_dir = j.value("cache_dir", std::string());
  if (cfg.emit_au_prc && !cfg.test_dataset)
    throw Error("config: au_prc needs a test_dataset");
  if (cfg.emit_test_accuracy && !cfg.test_dataset)
    throw Error("config: test_accuracy needs a test_dataset");
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config: invalid JSON in '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

/// Canonical form hashed into the fingerprint; everything that affects the
/// run.csv contents, nothing that merely affects where files land.
inline json canonical_config_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = detail::dataset_source_json(c.dataset);
  if (c.test_dataset) j["test_dataset"] = detail::dataset_source_json(*c.test_dataset);
  j["monomial_expand_deg3"] = c.monomial_expand_deg3;
  j["monomial_dim_cap"] = c.monomial_dim_cap;
  j["permutation_seed"] = c.permutation_seed;
  j["lambda"] = c.lambda;
  j["optimizer"] = {{"kind", to_string(c.optimizer)},
                    {"memory", c.lbfgs_memory},
                    {"carry_memory", c.carry_memory}};
  json r;
  r["kind"] = to_string(c.run_kind);
  r["n0"] = c.n0;
  r["factor"] = c.factor;
  r["iters_per_stage"] = c.iters_per_stage;
  r["budget_accesses"] = c.budget_accesses;
  r["metrics_cadence"] = c.metrics_cadence;
  r["grad_tol"] = c.grad_tol;
  if (c.target_log_rfvd) r["target_log_rfvd"] = *c.target_log_rfvd;
  r["max_updates_per_stage"] = c.max_updates_per_stage;
  r["epsilon"] = c.epsilon;
  r["epsilon0"] = c.epsilon0;
  r["kappa"] = c.kappa;
  r["stage_gaps"] = c.stage_gaps;
  r["eta_grid"] = c.eta_grid;
  r["sgd_shuffle_seed"] = c.sgd_shuffle_seed ? *c.sgd_shuffle_seed : c.permutation_seed + 1;
  j["run"] = r;
  j["reference"] = {{"enabled", c.reference_enabled},
                    {"grad_tol", c.reference_grad_tol},
                    {"max_iters", c.reference_max_iters}};
  j["metrics"] = {{"test_accuracy", c.emit_test_accuracy}, {"au_prc", c.emit_au_prc}};
  return j;
}

// ---------------------------------------------------------------------------
// Dataset loading and fingerprints
// ---------------------------------------------------------------------------

inline Dataset load_dataset(const DatasetSource& src) {
  if (src.is_synthetic()) return generate_synthetic(*src.synthetic);
  std::ifstream in(src.path);
  if (!in) throw Error("cannot open dataset '" + src.path + "'");
  return parse_libsvm(in, fs::path(src.path).filename().string());
}

inline std::uint64_t dataset_content_hash(const Dataset& ds) {
  std::uint64_t h = fnv1a64(&ds.dim, sizeof(ds.dim));
  for (const Example& z : ds.examples) {
    h = fnv1a64(&z.label, sizeof(z.label), h);
    if (!z.features.empty())
      h = fnv1a64(z.features.data(), z.features.size() * sizeof(Feature), h);
  }
  return h;
}

inline std::string config_fingerprint(const ExperimentConfig& cfg,
                                      std::uint64_t dataset_hash) {
  const std::string dump = canonical_config_json(cfg).dump();
  return hex64(fnv1a64(dump, fnv1a64(&dataset_hash, sizeof(dataset_hash))));
}

// ---------------------------------------------------------------------------
// Reference-optimum cache
// ---------------------------------------------------------------------------

struct ReferenceCacheEntry {
  std::string key;
  std::uint64_t dataset_hash = 0;
  std::uint64_t seed = 0;
  std::size_t prefix_n = 0;
  double lambda = 0.0;
  double grad_tol = 0.0;
  Vector weights;
  double value = 0.0;
  double grad_norm_achieved = 0.0;
  std::size_t iterations = 0;
  bool from_cache = false;  // transient, not serialized
};

namespace detail {

/// Advisory lock on <dir>/lock held for the scope; keeps concurrent
/// harness invocations from tearing cache entries.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path lock_path = dir / "lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ >= 0) ::flock(fd_, LOCK_EX);
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace detail

inline fs::path default_cache_dir(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("BET_CACHE_DIR"); env && *env) return env;
  return "reference-cache";
}

class ReferenceCache {
 public:
  explicit ReferenceCache(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  static std::string make_key(std::uint64_t dataset_hash, std::uint64_t seed,
                              std::size_t prefix_n, double lambda, double grad_tol) {
    std::uint64_t h = fnv1a64(&dataset_hash, sizeof(dataset_hash));
    h = fnv1a64(&seed, sizeof(seed), h);
    h = fnv1a64(&prefix_n, sizeof(prefix_n), h);
    h = fnv1a64(&lambda, sizeof(lambda), h);
    h = fnv1a64(&grad_tol, sizeof(grad_tol), h);
    return hex64(h);
  }

  /// Returns the cached solution for this exact fingerprint or computes,
  /// persists and returns it. The optimizer work of a fresh solve goes to
  /// `counter` (a measurement counter in every caller).
  ReferenceCacheEntry get_or_compute(const PermutedView& view, std::size_t prefix_n,
                                     double lambda, double grad_tol,
                                     std::size_t max_iters,
                                     EvalCounter* counter = nullptr) {
    ReferenceCacheEntry entry;
    entry.dataset_hash = dataset_content_hash(view.source());
    entry.seed = view.seed();
    entry.prefix_n = prefix_n;
    entry.lambda = lambda;
    entry.grad_tol = grad_tol;
    entry.key = make_key(entry.dataset_hash, entry.seed, prefix_n, lambda, grad_tol);

    const fs::path file = dir_ / (entry.key + ".json");
    {
      detail::DirLock lock(dir_);
      if (fs::exists(file)) {
        std::ifstream in(file);
        json j;
        in >> j;
        entry.weights = j.at("weights").get<Vector>();
        entry.value = j.at("value").get<double>();
        entry.grad_norm_achieved = j.at("grad_norm").get<double>();
        entry.iterations = j.at("iterations").get<std::size_t>();
        entry.from_cache = true;
        return entry;
      }
    }

    LogisticObjective obj(prefix(view, prefix_n), lambda, counter);
    ReferenceSolution sol = reference_minimize(obj, grad_tol, max_iters);
    entry.weights = std::move(sol.weights);
    entry.value = sol.value;
    entry.grad_norm_achieved = sol.grad_norm;
    entry.iterations = sol.iterations;
    entry.from_cache = false;

    json j;
    j["dataset_hash"] = hex64(entry.dataset_hash);
    j["seed"] = entry.seed;
    j["prefix_n"] = entry.prefix_n;
    j["lambda"] = entry.lambda;
    j["grad_tol"] = entry.grad_tol;
    j["value"] = entry.value;
    j["grad_norm"] = entry.grad_norm_achieved;
    j["iterations"] = entry.iterations;
    j["weights"] = entry.weights;
    {
      detail::DirLock lock(dir_);
      std::ofstream out(file);
      out << j.dump(1) << '\n';
    }
    return entry;
  }

 private:
  fs::path dir_;
};

// ---------------------------------------------------------------------------
// Experiment orchestration
// ---------------------------------------------------------------------------

struct ExperimentResult {
  RunRecord record;
  fs::path run_csv;
  fs::path summary_path;
  std::optional<ReferenceCacheEntry> reference;
};

namespace detail {

inline void write_run_csv(const fs::path& path, const RunRecord& rec) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << metrics_csv_header() << '\n';
  for (const MetricsRow& row : rec.rows) write_metrics_row(out, row);
}

inline void write_summary(const fs::path& path, const ExperimentConfig& cfg,
                          const RunRecord& rec, const Dataset& train,
                          const std::optional<ReferenceCacheEntry>& ref,
                          const std::string& error = "") {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "fingerprint: " << rec.config_fingerprint << '\n';
  out << "run_kind: " << to_string(cfg.run_kind) << '\n';
  out << "optimizer: " << to_string(cfg.optimizer) << '\n';
  out << "dataset: " << train.name << " n=" << train.size() << " dim=" << train.dim
      << '\n';
  out << "lambda: " << detail::format_double(cfg.lambda) << '\n';
  out << "rows: " << rec.rows.size() << '\n';
  out << "total_accesses: " << rec.total_accesses << '\n';
  out << "scheduler_accesses: " << rec.scheduler_accesses << '\n';
  out << "tuning_accesses: " << rec.tuning_accesses << '\n';
  out << "measurement_accesses: " << rec.measurement_accesses << '\n';
  out << "termination: " << rec.termination << '\n';
  out << "final_objective: " << detail::format_double(rec.final_objective) << '\n';
  out << "final_grad_norm: " << detail::format_double(rec.final_grad_norm) << '\n';
  if (ref) {
    out << "reference_value: " << detail::format_double(ref->value) << '\n';
    out << "reference_key: " << ref->key << '\n';
    out << "reference_from_cache: " << (ref->from_cache ? 1 : 0) << '\n';
  }
  out << "expansion_points:";
  for (const auto& [stage, acc] : rec.expansion_points)
    out << ' ' << stage << ':' << acc;
  out << '\n';
  out << "stage_accesses:";
  for (std::uint64_t a : rec.stage_accesses) out << ' ' << a;
  out << '\n';
  if (rec.initial_gap)
    out << "initial_gap: " << detail::format_double(*rec.initial_gap) << '\n';
  for (const OptimalStageInfo& s : rec.optimal_stages) {
    out << "stage " << s.index << ": n=" << s.batch_n
        << " eps=" << detail::format_double(s.epsilon_before)
        << " accesses=" << s.accesses << " passes=" << s.passes;
    if (s.gap_start) out << " gap_start=" << detail::format_double(*s.gap_start);
    if (s.gap_end) out << " gap_end=" << detail::format_double(*s.gap_end);
    out << '\n';
  }
  if (!error.empty()) out << "error: " << error << '\n';
}

}  // namespace detail

/// Computes (or fetches) the full-data reference optimum for a config.
inline ReferenceCacheEntry compute_reference(const ExperimentConfig& cfg,
                                             EvalCounter* counter = nullptr) {
  const Dataset ds = [&] {
    Dataset d = load_dataset(cfg.dataset);
    return cfg.monomial_expand_deg3 ? expand_monomials_deg3(d, cfg.monomial_dim_cap) : d;
  }();
  PermutedView view(ds, cfg.permutation_seed);
  ReferenceCache cache(default_cache_dir(cfg.cache_dir));
  return cache.get_or_compute(view, view.size(), cfg.lambda, cfg.reference_grad_tol,
                              cfg.reference_max_iters, counter);
}

/// Runs the configured experiment and writes run.csv plus summary.txt into
/// the output directory. The directory is created only after the config and
/// datasets have validated; a failed run still leaves the partial run.csv.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Dataset train = load_dataset(cfg.dataset);
  if (cfg.monomial_expand_deg3)
    train = expand_monomials_deg3(train, cfg.monomial_dim_cap);
  std::optional<Dataset> test;
  if (cfg.test_dataset) test = load_dataset(*cfg.test_dataset);

  PermutedView view(train, cfg.permutation_seed);
  const std::string fingerprint =
      config_fingerprint(cfg, dataset_content_hash(train));

  ExperimentResult result;
  EvalCounter reference_work;
  if (cfg.reference_enabled) {
    ReferenceCache cache(default_cache_dir(cfg.cache_dir));
    result.reference =
        cache.get_or_compute(view, view.size(), cfg.lambda, cfg.reference_grad_tol,
                             cfg.reference_max_iters, &reference_work);
  }

  MetricsOptions metrics;
  metrics.cadence = cfg.metrics_cadence;
  if (result.reference) metrics.reference_value = result.reference->value;
  if (test) {
    metrics.test_data = &*test;
    if (!cfg.emit_test_accuracy && !cfg.emit_au_prc) metrics.test_data = nullptr;
    metrics.with_au_prc = cfg.emit_au_prc;
  }

  Stopping stop;
  stop.grad_tol = cfg.grad_tol;
  stop.budget_accesses = cfg.budget_accesses;
  stop.target_log_rfvd = cfg.target_log_rfvd;
  stop.max_updates_per_stage = cfg.max_updates_per_stage;

  OptimizerOptions opts;
  opts.lbfgs_memory = cfg.lbfgs_memory;

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  result.run_csv = out_dir / "run.csv";
  result.summary_path = out_dir / "summary.txt";

  ExpansionSchedule schedule{cfg.n0, cfg.factor};
  try {
    switch (cfg.run_kind) {
      case RunKind::Fixed:
        result.record = run_fixed_batch(cfg.optimizer, opts, view, cfg.lambda, stop, metrics);
        break;
      case RunKind::SimpleBet:
        result.record = run_simple_bet(cfg.optimizer, opts, schedule, cfg.iters_per_stage,
                                       view, cfg.lambda, stop, metrics);
        break;
      case RunKind::TwoTrack:
        result.record = run_two_track(cfg.optimizer, opts, schedule, view, cfg.lambda,
                                      stop, metrics, cfg.carry_memory);
        break;
      case RunKind::OptimalBet: {
        OptimalBetParams params;
        params.epsilon = cfg.epsilon;
        params.epsilon0 = cfg.epsilon0;
        params.n0 = cfg.n0;
        params.kappa = cfg.kappa;
        params.compute_stage_gaps = cfg.stage_gaps;
        params.reference_grad_tol = cfg.reference_grad_tol;
        result.record = run_optimal_bet(cfg.optimizer, opts, params, view, cfg.lambda,
                                        metrics, {}, cfg.metrics_cadence);
        break;
      }
      case RunKind::Sgd: {
        const std::uint64_t shuffle_seed =
            cfg.sgd_shuffle_seed ? *cfg.sgd_shuffle_seed : cfg.permutation_seed + 1;
        result.record = run_sgd_baseline(view, cfg.lambda, cfg.eta_grid,
                                         cfg.budget_accesses, metrics, shuffle_seed, stop);
        break;
      }
    }
  } catch (const RunError& e) {
    RunRecord partial = e.partial();
    partial.config_fingerprint = fingerprint;
    partial.measurement_accesses += reference_work.example_accesses;
    detail::write_run_csv(result.run_csv, partial);
    detail::write_summary(result.summary_path, cfg, partial, train, result.reference,
                          e.what());
    throw Error(std::string("run failed (partial results kept): ") + e.what());
  }

  result.record.config_fingerprint = fingerprint;
  result.record.measurement_accesses += reference_work.example_accesses;
  detail::write_run_csv(result.run_csv, result.record);
  detail::write_summary(result.summary_path, cfg, result.record, train,
                        result.reference);
  return result;
}

// ---------------------------------------------------------------------------
// Run comparison and plot data
// ---------------------------------------------------------------------------

struct CompareCell {
  bool reached = false;
  double accesses = 0.0;
};

struct CompareTable {
  std::vector<double> levels;
  std::vector<std::string> runs;
  std::vector<std::vector<CompareCell>> cells;  // [run][level]
};

/// Accesses at which a run first reaches the given log RFVD level, linearly
/// interpolated between adjacent rows; unset when never reached.
inline CompareCell accesses_to_level(const std::vector<MetricsRow>& rows, double level) {
  CompareCell cell;
  const MetricsRow* prev = nullptr;
  for (const MetricsRow& row : rows) {
    if (!row.log_rfvd) continue;
    const double y = *row.log_rfvd;
    if (y <= level) {
      cell.reached = true;
      if (!prev || std::isinf(y)) {
        cell.accesses = static_cast<double>(row.accesses);
      } else {
        const double y0 = *prev->log_rfvd;
        const double x0 = static_cast<double>(prev->accesses);
        const double x1 = static_cast<double>(row.accesses);
        cell.accesses = y0 <= level ? x0 : x0 + (x1 - x0) * (level - y0) / (y - y0);
      }
      return cell;
    }
    prev = &row;
  }
  return cell;
}

inline CompareTable compare_runs(const std::vector<fs::path>& csvs,
                                 const std::vector<double>& levels) {
  if (csvs.size() < 2) throw Error("compare: need at least two run CSVs");
  if (levels.empty()) throw Error("compare: need at least one level");
  CompareTable table;
  table.levels = levels;
  for (const fs::path& p : csvs) {
    std::ifstream in(p);
    if (!in) throw Error("compare: cannot open '" + p.string() + "'");
    const std::vector<MetricsRow> rows = read_metrics_csv(in);
    table.runs.push_back(p.string());
    std::vector<CompareCell> cells;
    for (double level : levels) cells.push_back(accesses_to_level(rows, level));
    table.cells.push_back(std::move(cells));
  }
  return table;
}

inline std::string format_compare_table(const CompareTable& t) {
  std::ostringstream out;
  out << "accesses to log-RFVD level\n";
  for (std::size_t r = 0; r < t.runs.size(); ++r) {
    out << t.runs[r] << '\n';
    for (std::size_t l = 0; l < t.levels.size(); ++l) {
      out << "  level " << t.levels[l] << ": ";
      if (t.cells[r][l].reached)
        out << detail::format_double(t.cells[r][l].accesses);
      else
        out << "not reached";
      out << '\n';
    }
  }
  return out.str();
}

inline void write_compare_csv(const CompareTable& t, std::ostream& out) {
  out << "run,level,reached,accesses\n";
  for (std::size_t r = 0; r < t.runs.size(); ++r)
    for (std::size_t l = 0; l < t.levels.size(); ++l) {
      const CompareCell& c = t.cells[r][l];
      out << t.runs[r] << ',' << detail::format_double(t.levels[l]) << ','
          << (c.reached ? 1 : 0) << ','
          << (c.reached ? detail::format_double(c.accesses) : std::string()) << '\n';
    }
}

enum class PlotKind { RfvdVsAccesses, AccuracyVsAccesses, RfvdVsTime };

inline PlotKind plot_kind_from_string(const std::string& s) {
  if (s == "rfvd-vs-accesses") return PlotKind::RfvdVsAccesses;
  if (s == "accuracy-vs-accesses") return PlotKind::AccuracyVsAccesses;
  if (s == "rfvd-vs-time") return PlotKind::RfvdVsTime;
  throw Error("unknown plot kind '" + s +
              "' (expected rfvd-vs-accesses|accuracy-vs-accesses|rfvd-vs-time)");
}

/// Two value columns plus an expansion marker; rows missing the metric are
/// skipped and duplicate x positions collapse into one row (keeping the
/// expansion mark), so x is strictly increasing.
inline void emit_plotdata(const std::vector<MetricsRow>& rows, PlotKind kind,
                          std::ostream& out) {
  if (rows.empty()) throw Error("emit_plotdata: empty record");
  const char* header = nullptr;
  switch (kind) {
    case PlotKind::RfvdVsAccesses: header = "accesses,log_rfvd,expansion"; break;
    case PlotKind::AccuracyVsAccesses: header = "accesses,test_accuracy,expansion"; break;
    case PlotKind::RfvdVsTime: header = "wall_clock_s,log_rfvd,expansion"; break;
  }
  out << header << '\n';
  bool have_last = false;
  double last_x = 0.0, last_y = 0.0;
  bool last_exp = false;
  const auto flush = [&] {
    if (have_last)
      out << detail::format_double(last_x) << ',' << detail::format_double(last_y) << ','
          << (last_exp ? 1 : 0) << '\n';
  };
  for (const MetricsRow& row : rows) {
    std::optional<double> y;
    double x = 0.0;
    switch (kind) {
      case PlotKind::RfvdVsAccesses:
        x = static_cast<double>(row.accesses);
        y = row.log_rfvd;
        break;
      case PlotKind::AccuracyVsAccesses:
        x = static_cast<double>(row.accesses);
        y = row.test_accuracy;
        break;
      case PlotKind::RfvdVsTime:
        x = row.wall_clock_s;
        y = row.log_rfvd;
        break;
    }
    if (!y) continue;
    if (have_last && x == last_x) {
      last_y = *y;
      last_exp = last_exp || row.expansion;
      continue;
    }
    flush();
    have_last = true;
    last_x = x;
    last_y = *y;
    last_exp = row.expansion;
  }
  flush();
}

}  // namespace bet

#endif  // BET_HARNESS_HPP
