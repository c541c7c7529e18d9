#ifndef BET_DATA_HPP
#define BET_DATA_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "bet/rng.hpp"
#include "bet/vec.hpp"

namespace bet {

/// One sparse feature: 1-based index, finite value.
struct Feature {
  std::uint32_t index = 0;
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// A labeled sparse example. Feature indices are strictly increasing and
/// the label is -1 or +1.
struct Example {
  std::vector<Feature> features;
  int label = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t dim = 0;
  std::string name;

  std::size_t size() const { return examples.size(); }

  /// Equality ignores the name; it compares content only.
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.dim == b.dim && a.examples == b.examples;
  }
};

namespace detail {

inline double sparse_dot(const Vector& w, const Example& z) {
  double s = 0.0;
  for (const Feature& f : z.features) {
    const std::size_t j = f.index - 1;
    if (j < w.size()) s += w[j] * f.value;
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LIBSVM text format: "<label> <idx>:<val> ...", whitespace separated,
// 1-based strictly increasing indices. Labels 0/1 and -1/+1 are both
// accepted and normalized to -1/+1 (0 maps to -1).
// ---------------------------------------------------------------------------

inline Dataset parse_libsvm(std::istream& in, std::string name = "") {
  Dataset ds;
  ds.name = std::move(name);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // tokenize on spaces/tabs (tolerate trailing \r)
    std::vector<std::string> tokens;
    std::string tok;
    for (char c : line) {
      if (c == ' ' || c == '\t' || c == '\r') {
        if (!tok.empty()) tokens.push_back(std::move(tok)), tok.clear();
      } else {
        tok.push_back(c);
      }
    }
    if (!tok.empty()) tokens.push_back(std::move(tok));
    if (tokens.empty()) continue;  // blank line

    Example ex;
    {
      const std::string& t = tokens[0];
      char* end = nullptr;
      const double v = std::strtod(t.c_str(), &end);
      if (end != t.c_str() + t.size() || t.empty())
        throw Error("libsvm parse error at line " + std::to_string(line_no) +
                    ": bad label '" + t + "'");
      if (v == 0.0)
        ex.label = -1;
      else if (v == 1.0)
        ex.label = +1;
      else if (v == -1.0)
        ex.label = -1;
      else
        throw Error("libsvm parse error at line " + std::to_string(line_no) +
                    ": label must be 0/1 or -1/+1, got '" + t + "'");
    }
    std::uint32_t prev_index = 0;
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      const std::string& t = tokens[k];
      const std::size_t colon = t.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == t.size())
        throw Error("libsvm parse error at line " + std::to_string(line_no) +
                    ": expected idx:val, got '" + t + "'");
      char* end = nullptr;
      const std::string idx_str = t.substr(0, colon);
      const unsigned long idx = std::strtoul(idx_str.c_str(), &end, 10);
      if (end != idx_str.c_str() + idx_str.size() || idx == 0 ||
          idx > std::numeric_limits<std::uint32_t>::max())
        throw Error("libsvm parse error at line " + std::to_string(line_no) +
                    ": bad feature index '" + idx_str + "'");
      const std::string val_str = t.substr(colon + 1);
      const double val = std::strtod(val_str.c_str(), &end);
      if (end != val_str.c_str() + val_str.size() || !std::isfinite(val))
        throw Error("libsvm parse error at line " + std::to_string(line_no) +
                    ": bad feature value '" + val_str + "'");
      if (idx <= prev_index)
        throw Error("libsvm parse error at line " + std::to_string(line_no) +
                    ": feature indices not strictly increasing");
      prev_index = static_cast<std::uint32_t>(idx);
      ex.features.push_back({static_cast<std::uint32_t>(idx), val});
      if (idx > ds.dim) ds.dim = idx;
    }
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw Error("libsvm parse error: empty input");
  if (ds.dim == 0) throw Error("libsvm parse error: no features in input");
  return ds;
}

inline void serialize_libsvm(const Dataset& ds, std::ostream& out) {
  char buf[64];
  for (const Example& ex : ds.examples) {
    out << (ex.label > 0 ? "+1" : "-1");
    for (const Feature& f : ex.features) {
      std::snprintf(buf, sizeof(buf), " %u:%.17g", f.index, f.value);
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Permuted views and prefix batches
// ---------------------------------------------------------------------------

/// A random reordering of a dataset, drawn once from a seeded generator
/// (Fisher-Yates over the SeededRng stream). Prefixes of the view are the
/// batches every expanding-batch run trains on; they are nested by
/// construction since the permutation is fixed up front.
class PermutedView {
 public:
  PermutedView(const Dataset& source, std::uint64_t seed)
      : source_(&source), seed_(seed), perm_(source.size()) {
    if (source.examples.empty()) throw Error("permute: empty dataset");
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
    SeededRng rng(seed);
    for (std::size_t i = perm_.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
      std::swap(perm_[i], perm_[j]);
    }
  }

  const Dataset& source() const { return *source_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return perm_.size(); }
  std::size_t dim() const { return source_->dim; }
  const std::vector<std::size_t>& permutation() const { return perm_; }
  const Example& at(std::size_t i) const { return source_->examples[perm_[i]]; }

 private:
  const Dataset* source_;
  std::uint64_t seed_;
  std::vector<std::size_t> perm_;
};

/// The first n examples of a permuted view. A logical window, no copy.
class PrefixBatch {
 public:
  PrefixBatch(const PermutedView& view, std::size_t n) : view_(&view), n_(n) {
    if (n < 1 || n > view.size())
      throw Error("prefix: n=" + std::to_string(n) + " out of range [1.." +
                  std::to_string(view.size()) + "]");
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return view_->dim(); }
  const PermutedView& view() const { return *view_; }
  const Example& at(std::size_t i) const { return view_->at(i); }

 private:
  const PermutedView* view_;
  std::size_t n_;
};

inline PermutedView permute(const Dataset& ds, std::uint64_t seed) {
  return PermutedView(ds, seed);
}

inline PrefixBatch prefix(const PermutedView& view, std::size_t n) {
  return PrefixBatch(view, n);
}

// ---------------------------------------------------------------------------
// Synthetic logistic data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::size_t n_examples = 0;
  std::size_t dim = 0;
  double sparsity = 0.1;     // per-coordinate presence probability, in (0,1]
  double separation = 10.0;  // label noise is scaled by 1/separation
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset dataset;
  Vector true_weights;
};

/// Draws a hidden weight vector, then examples with sparse gaussian
/// features; the label is the sign of the true margin plus gaussian noise
/// scaled by 1/separation (ties count as +1). Draw order is fixed:
/// weights first, then per example the coordinate mask/values and one
/// noise draw, so a seed fully determines the dataset.
inline SyntheticData generate_synthetic_with_truth(const SyntheticSpec& spec) {
  if (spec.n_examples < 2) throw Error("generate_synthetic: need n_examples >= 2");
  if (spec.dim < 1) throw Error("generate_synthetic: need dim >= 1");
  if (!(spec.sparsity > 0.0 && spec.sparsity <= 1.0))
    throw Error("generate_synthetic: sparsity must be in (0,1]");
  if (!(spec.separation > 0.0))
    throw Error("generate_synthetic: separation must be positive");

  SeededRng rng(spec.seed);
  SyntheticData out;
  out.true_weights.resize(spec.dim);
  for (double& w : out.true_weights) w = rng.next_gaussian();

  Dataset& ds = out.dataset;
  ds.dim = spec.dim;
  ds.name = "synthetic-" + std::to_string(spec.n_examples) + "x" +
            std::to_string(spec.dim) + "-seed" + std::to_string(spec.seed);
  ds.examples.reserve(spec.n_examples);
  const double noise_scale =
      std::isinf(spec.separation) ? 0.0 : 1.0 / spec.separation;
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    Example ex;
    double margin = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      if (rng.next_unit() < spec.sparsity) {
        const double v = rng.next_gaussian();
        ex.features.push_back({static_cast<std::uint32_t>(j + 1), v});
        margin += out.true_weights[j] * v;
      }
    }
    const double noise = rng.next_gaussian() * noise_scale;
    ex.label = (margin + noise >= 0.0) ? +1 : -1;
    ds.examples.push_back(std::move(ex));
  }
  return out;
}

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic_with_truth(spec).dataset;
}

// ---------------------------------------------------------------------------
// Degree-3 monomial feature expansion
// ---------------------------------------------------------------------------

inline std::size_t monomial_deg3_dim(std::size_t d) {
  return d + d * (d + 1) / 2 + d * (d + 1) * (d + 2) / 6;
}

/// Replaces each example's features by all monomials of degree 1, 2 and 3.
/// Output indices follow a canonical enumeration: the degree-1 block first,
/// then degree-2 pairs (a<=b) in lexicographic order, then degree-3 triples
/// (a<=b<=c) in lexicographic order, each over the full input index range.
inline Dataset expand_monomials_deg3(const Dataset& ds,
                                     std::size_t output_dim_cap = 1000000) {
  const std::size_t d = ds.dim;
  const std::size_t out_dim = monomial_deg3_dim(d);
  if (out_dim > output_dim_cap)
    throw Error("expand_monomials_deg3: output dim " + std::to_string(out_dim) +
                " exceeds cap " + std::to_string(output_dim_cap));

  // pairs_before[a]: lexicographic pairs with first component < a, over [1..d]
  // triples_before[a]: lexicographic triples with first component < a
  std::vector<std::size_t> pairs_before(d + 2, 0), triples_before(d + 2, 0);
  for (std::size_t a = 2; a <= d + 1; ++a) {
    pairs_before[a] = pairs_before[a - 1] + (d - (a - 1) + 1);
    const std::size_t m = d - (a - 1) + 1;  // suffix alphabet size at a-1
    triples_before[a] = triples_before[a - 1] + m * (m + 1) / 2;
  }
  const std::size_t deg2_base = d;
  const std::size_t deg3_base = d + d * (d + 1) / 2;

  const auto idx2 = [&](std::size_t a, std::size_t b) {
    return deg2_base + pairs_before[a] + (b - a + 1);
  };
  const auto idx3 = [&](std::size_t a, std::size_t b, std::size_t c) {
    // pair (b,c) relabeled into the suffix alphabet [a..d]
    const std::size_t m = d - a + 1;
    const std::size_t bb = b - a + 1, cc = c - a + 1;
    const std::size_t pair_pos =
        (bb - 1) * (m + 1) - bb * (bb - 1) / 2 + (cc - bb + 1);
    return deg3_base + triples_before[a] + pair_pos;
  };

  Dataset out;
  out.dim = out_dim;
  out.name = ds.name.empty() ? "deg3" : ds.name + "-deg3";
  out.examples.reserve(ds.examples.size());
  for (const Example& ex : ds.examples) {
    Example oe;
    oe.label = ex.label;
    const auto& fs = ex.features;
    for (const Feature& f : fs) oe.features.push_back(f);
    for (std::size_t p = 0; p < fs.size(); ++p)
      for (std::size_t q = p; q < fs.size(); ++q)
        oe.features.push_back({static_cast<std::uint32_t>(idx2(fs[p].index, fs[q].index)),
                               fs[p].value * fs[q].value});
    for (std::size_t p = 0; p < fs.size(); ++p)
      for (std::size_t q = p; q < fs.size(); ++q)
        for (std::size_t r = q; r < fs.size(); ++r)
          oe.features.push_back(
              {static_cast<std::uint32_t>(idx3(fs[p].index, fs[q].index, fs[r].index)),
               fs[p].value * fs[q].value * fs[r].value});
    out.examples.push_back(std::move(oe));
  }
  return out;
}

}  // namespace bet

#endif  // BET_DATA_HPP
