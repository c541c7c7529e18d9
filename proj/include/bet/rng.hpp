#ifndef BET_RNG_HPP
#define BET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace bet {

/// Seeded random source with portable output.
///
/// The raw std::mt19937_64 sequence is fixed by the standard, but the
/// distribution adaptors are not, so every transform (bounded integers,
/// unit reals, gaussians) is implemented here. Identical seeds produce
/// identical draws on any conforming platform, which keeps recorded
/// permutations and synthetic datasets stable.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform integer in [0, bound). bound must be positive.
  /// Modulo reduction; the bias of ~bound/2^64 is irrelevant here.
  std::uint64_t next_below(std::uint64_t bound) { return gen_() % bound; }

  /// Uniform real in [0, 1) with 53-bit resolution.
  double next_unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // log(0) guard
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bet

#endif  // BET_RNG_HPP
