#ifndef BET_METRICS_HPP
#define BET_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bet/data.hpp"
#include "bet/vec.hpp"

namespace bet {

/// log((f - f*) / f*), natural log. A non-positive numerator returns -inf.
inline double log_rfvd(double objective_value, double reference_value) {
  if (!(reference_value > 0.0))
    throw Error("log_rfvd: reference value must be positive");
  const double num = objective_value - reference_value;
  if (num <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(num / reference_value);
}

/// Fraction of examples with sign(<w,x>) == y. A zero margin predicts +1.
/// Features beyond the model dimension are ignored.
inline double accuracy(const Vector& w, const Dataset& test) {
  if (test.examples.empty()) throw Error("accuracy: empty test set");
  std::size_t correct = 0;
  for (const Example& z : test.examples) {
    const double margin = detail::sparse_dot(w, z);
    const int pred = margin >= 0.0 ? +1 : -1;
    if (pred == z.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// Raw scores <w,x> for ranking metrics.
inline std::vector<double> score_examples(const Vector& w, const Dataset& test) {
  std::vector<double> scores;
  scores.reserve(test.size());
  for (const Example& z : test.examples) scores.push_back(detail::sparse_dot(w, z));
  return scores;
}

/// Area under the precision-recall curve, step-wise (non-interpolated):
/// rank by score descending with ties kept in input order, then accumulate
/// delta-recall times precision at each positive.
inline double au_prc(const std::vector<double>& scores,
                     const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error("au_prc: scores/labels length mismatch");
  std::size_t positives = 0;
  for (int y : labels) positives += (y > 0) ? 1 : 0;
  if (positives == 0) throw Error("au_prc: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double area = 0.0;
  std::size_t tp = 0;
  for (std::size_t rank = 1; rank <= order.size(); ++rank) {
    if (labels[order[rank - 1]] > 0) {
      ++tp;
      const double precision = static_cast<double>(tp) / static_cast<double>(rank);
      area += precision / static_cast<double>(positives);
    }
  }
  return area;
}

// ---------------------------------------------------------------------------
// Metrics rows and their CSV form
// ---------------------------------------------------------------------------

/// One sampled point of a run. Serializes to the fixed CSV column order
///   wall_clock_s,accesses,objective,log_rfvd,test_accuracy,au_prc,stage,batch_n,expansion
/// Optional fields serialize as empty cells; -inf log RFVD prints as "-inf".
struct MetricsRow {
  double wall_clock_s = 0.0;
  std::uint64_t accesses = 0;
  double objective_value = 0.0;
  std::optional<double> log_rfvd;
  std::optional<double> test_accuracy;
  std::optional<double> au_prc;
  std::uint32_t stage = 0;
  std::uint64_t batch_n = 0;
  bool expansion = false;
};

inline const char* metrics_csv_header() {
  return "wall_clock_s,accesses,objective,log_rfvd,test_accuracy,au_prc,stage,batch_n,expansion";
}

namespace detail {

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace detail

inline void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  char wall[40];
  std::snprintf(wall, sizeof(wall), "%.6f", r.wall_clock_s);
  out << wall << ',' << r.accesses << ',' << detail::format_double(r.objective_value)
      << ',' << detail::format_optional(r.log_rfvd) << ','
      << detail::format_optional(r.test_accuracy) << ','
      << detail::format_optional(r.au_prc) << ',' << r.stage << ',' << r.batch_n
      << ',' << (r.expansion ? 1 : 0) << '\n';
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("metrics csv: empty file");
  // tolerate trailing \r on the header
  while (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != metrics_csv_header())
    throw Error("metrics csv: unexpected header '" + line + "'");

  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (cells.size() != 9)
      throw Error("metrics csv: line " + std::to_string(line_no) + " has " +
                  std::to_string(cells.size()) + " cells, expected 9");
    const auto parse_d = [&](const std::string& s) -> double {
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      return std::stod(s);
    };
    const auto parse_opt = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return parse_d(s);
    };
    MetricsRow r;
    r.wall_clock_s = parse_d(cells[0]);
    r.accesses = std::stoull(cells[1]);
    r.objective_value = parse_d(cells[2]);
    r.log_rfvd = parse_opt(cells[3]);
    r.test_accuracy = parse_opt(cells[4]);
    r.au_prc = parse_opt(cells[5]);
    r.stage = static_cast<std::uint32_t>(std::stoul(cells[6]));
    r.batch_n = std::stoull(cells[7]);
    r.expansion = cells[8] == "1";
    rows.push_back(r);
  }
  return rows;
}

}  // namespace bet

#endif  // BET_METRICS_HPP
