// Benchmark CLI: runs configured experiments, manages the reference-optimum
// cache, and turns run CSVs into comparison tables and plot data.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bet/bet.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& output_dir) {
  bet::ExperimentConfig cfg = bet::load_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  const bet::ExperimentResult result = bet::run_experiment(cfg);
  std::cout << "fingerprint " << result.record.config_fingerprint << '\n'
            << "rows " << result.record.rows.size() << '\n'
            << "total_accesses " << result.record.total_accesses << '\n'
            << "termination " << result.record.termination << '\n'
            << "wrote " << result.run_csv.string() << '\n';
  return 0;
}

int cmd_reference(const std::string& config_path) {
  const bet::ExperimentConfig cfg = bet::load_config(config_path);
  bet::EvalCounter work;
  const bet::ReferenceCacheEntry entry = bet::compute_reference(cfg, &work);
  std::cout << "key " << entry.key << '\n'
            << "value " << bet::detail::format_double(entry.value) << '\n'
            << "grad_norm " << bet::detail::format_double(entry.grad_norm_achieved)
            << '\n'
            << "iterations " << entry.iterations << '\n'
            << "from_cache " << (entry.from_cache ? 1 : 0) << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& csvs, const std::string& levels_arg,
                const std::string& out_path) {
  std::vector<double> levels;
  std::stringstream ss(levels_arg);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) levels.push_back(std::stod(tok));
  std::vector<bet::fs::path> paths(csvs.begin(), csvs.end());
  const bet::CompareTable table = bet::compare_runs(paths, levels);
  std::cout << bet::format_compare_table(table);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw bet::Error("cannot write '" + out_path + "'");
    bet::write_compare_csv(table, out);
    std::cout << "wrote " << out_path << '\n';
  }
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& kind, const std::string& out_path) {
  std::ifstream in(csv);
  if (!in) throw bet::Error("cannot open '" + csv + "'");
  const std::vector<bet::MetricsRow> rows = bet::read_metrics_csv(in);
  const bet::PlotKind pk = bet::plot_kind_from_string(kind);
  std::ofstream out(out_path);
  if (!out) throw bet::Error("cannot write '" + out_path + "'");
  bet::emit_plotdata(rows, pk, out);
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch-expansion training benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  auto* run = app.add_subcommand("run", "run the experiment described by a config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--output-dir", output_dir, "override the config's output directory");

  std::string ref_config;
  auto* reference =
      app.add_subcommand("reference", "compute or fetch the cached reference optimum");
  reference->add_option("config", ref_config, "JSON config file")->required();

  std::vector<std::string> compare_csvs;
  std::string levels = "-1,-3,-6";
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "accesses-to-target across run CSVs");
  compare->add_option("csvs", compare_csvs, "run.csv files")->expected(-2);
  compare->add_option("--levels", levels, "comma-separated log RFVD levels");
  compare->add_option("--out", compare_out, "also write a machine-readable CSV");

  std::string plot_csv, plot_kind = "rfvd-vs-accesses", plot_out = "plot.csv";
  auto* plot = app.add_subcommand("plot", "project a run CSV into plot data");
  plot->add_option("csv", plot_csv, "run.csv file")->required();
  plot->add_option("--kind", plot_kind,
                   "rfvd-vs-accesses|accuracy-vs-accesses|rfvd-vs-time");
  plot->add_option("--out", plot_out, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, output_dir);
    if (reference->parsed()) return cmd_reference(ref_config);
    if (compare->parsed()) return cmd_compare(compare_csvs, levels, compare_out);
    if (plot->parsed()) return cmd_plot(plot_csv, plot_kind, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
