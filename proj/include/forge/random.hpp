#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace forge {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

/// Seed for a sub-task, a pure function of its inputs. Used so per-record work
/// does not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index);

/// Seeded generator with platform-independent distributions.
///
/// The engine is std::mt19937_64 (bit-exact by the standard). The standard
/// distribution classes are implementation-defined, so every distribution here
/// is computed from raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform on [0, n); unbiased.
  std::uint64_t below(std::uint64_t n);
  /// Uniform on [lo, hi], inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  /// Standard normal (Box-Muller, cached pair).
  double normal();
  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace forge
