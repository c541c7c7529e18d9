#ifndef BET_OBJECTIVE_HPP
#define BET_OBJECTIVE_HPP

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>

#include "bet/data.hpp"
#include "bet/vec.hpp"

namespace bet {

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Counts example accesses: one unit per example whose loss or gradient
/// contribution is evaluated once. This is the canonical cost measure for
/// every run; wall clock is recorded alongside but never used for decisions.
struct EvalCounter {
  std::uint64_t example_accesses = 0;
  void add(std::uint64_t n) { example_accesses += n; }
};

/// L2-regularized logistic loss over a prefix batch:
///
///   f(w) = (1/n) sum_i log(1 + exp(-y_i <w, x_i>)) + (lambda/2) ||w||^2
///
/// Every value or gradient evaluation charges n units to the attached
/// counter (value_and_gradient is one pass, so n rather than 2n).
/// Evaluation is a fixed-order sequential reduction, so results are
/// bit-identical across runs. Instances are cheap views; the batch data is
/// shared and read-only.
class LogisticObjective {
 public:
  LogisticObjective(PrefixBatch batch, double lambda, EvalCounter* counter)
      : batch_(batch), lambda_(lambda), counter_(counter) {
    if (!(lambda > 0.0)) throw Error("objective: lambda must be positive");
  }

  std::size_t dim() const { return batch_.dim(); }
  std::size_t batch_size() const { return batch_.size(); }
  double lambda() const { return lambda_; }
  const PrefixBatch& batch() const { return batch_; }
  EvalCounter* counter() const { return counter_; }

  double value(const Vector& w) const {
    check_dim(w);
    const std::size_t n = batch_.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Example& z = batch_.at(i);
      loss += softplus(-z.label * detail::sparse_dot(w, z));
    }
    charge(n);
    return loss / static_cast<double>(n) + 0.5 * lambda_ * squared_norm(w);
  }

  void gradient(const Vector& w, Vector& g) const {
    check_dim(w);
    const std::size_t n = batch_.size();
    g.assign(w.size(), 0.0);
    accumulate_loss_gradient(w, g);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv_n + lambda_ * w[j];
    charge(n);
  }

  Vector gradient(const Vector& w) const {
    Vector g;
    gradient(w, g);
    return g;
  }

  /// One pass producing both the value and the gradient; charges n, not 2n.
  double value_and_gradient(const Vector& w, Vector& g) const {
    check_dim(w);
    const std::size_t n = batch_.size();
    g.assign(w.size(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Example& z = batch_.at(i);
      const double zmargin = -z.label * detail::sparse_dot(w, z);
      loss += softplus(zmargin);
      const double coeff = -z.label * sigmoid(zmargin);
      for (const Feature& f : z.features) g[f.index - 1] += coeff * f.value;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv_n + lambda_ * w[j];
    charge(n);
    return loss / static_cast<double>(n) + 0.5 * lambda_ * squared_norm(w);
  }

  /// One-dimensional restriction phi(a) = f(w + a d), evaluated from cached
  /// per-example margins and directional products. The first eval computes
  /// the caches; every eval charges n accesses (each example's contribution
  /// is recomputed at the new step).
  class Ray {
   public:
    struct Point {
      double phi = 0.0, dphi = 0.0, ddphi = 0.0;
    };

    Ray(const LogisticObjective& obj, const Vector& w, const Vector& d)
        : obj_(&obj), w_(&w), d_(&d) {
      obj.check_dim(w);
      obj.check_dim(d);
      w2_ = squared_norm(w);
      wd_ = dot(w, d);
      d2_ = squared_norm(d);
    }

    Point eval(double alpha) {
      const std::size_t n = obj_->batch_size();
      if (margins_.empty()) {
        margins_.resize(n);
        dirs_.resize(n);
        labels_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const Example& z = obj_->batch_.at(i);
          margins_[i] = detail::sparse_dot(*w_, z);
          dirs_[i] = detail::sparse_dot(*d_, z);
          labels_[i] = z.label;
        }
      }
      Point p;
      for (std::size_t i = 0; i < n; ++i) {
        const double zm = -labels_[i] * (margins_[i] + alpha * dirs_[i]);
        const double s = sigmoid(zm);
        p.phi += softplus(zm);
        p.dphi += -labels_[i] * dirs_[i] * s;
        p.ddphi += dirs_[i] * dirs_[i] * s * (1.0 - s);
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      const double lambda = obj_->lambda_;
      p.phi = p.phi * inv_n + 0.5 * lambda * (w2_ + 2.0 * alpha * wd_ + alpha * alpha * d2_);
      p.dphi = p.dphi * inv_n + lambda * (wd_ + alpha * d2_);
      p.ddphi = p.ddphi * inv_n + lambda * d2_;
      obj_->charge(n);
      ++evals_;
      return p;
    }

    int evals() const { return evals_; }

   private:
    const LogisticObjective* obj_;
    const Vector* w_;
    const Vector* d_;
    double w2_, wd_, d2_;
    std::vector<double> margins_, dirs_;
    std::vector<int> labels_;
    int evals_ = 0;
  };

  Ray ray(const Vector& w, const Vector& d) const { return Ray(*this, w, d); }

 private:
  friend class Ray;

  void check_dim(const Vector& v) const {
    if (v.size() != batch_.dim())
      throw Error("objective: vector dim " + std::to_string(v.size()) +
                  " != batch dim " + std::to_string(batch_.dim()));
  }

  void charge(std::uint64_t n) const {
    if (counter_) counter_->add(n);
  }

  void accumulate_loss_gradient(const Vector& w, Vector& g) const {
    const std::size_t n = batch_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Example& z = batch_.at(i);
      const double coeff = -z.label * sigmoid(-z.label * detail::sparse_dot(w, z));
      for (const Feature& f : z.features) g[f.index - 1] += coeff * f.value;
    }
  }

  PrefixBatch batch_;
  double lambda_;
  EvalCounter* counter_;
};

/// Gap to the reference optimum of the same batch. Tiny negatives are
/// rounding in the reference value and clamp to zero; anything below -1e-9
/// is reported before clamping.
inline double opt_gap(const LogisticObjective& obj, const Vector& w,
                      double reference_value) {
  double gap = obj.value(w) - reference_value;
  if (gap < 0.0) {
    if (gap < -1e-9)
      std::cerr << "opt_gap: value " << gap
                << " below reference; check the reference tolerance\n";
    gap = 0.0;
  }
  return gap;
}

}  // namespace bet

#endif  // BET_OBJECTIVE_HPP
