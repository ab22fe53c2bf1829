#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace taper {

/// 64-bit FNV-1a; used for derived seeds and content hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seed for a named stage, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Seeded generator. The engine is std::mt19937_64, whose output sequence is
/// fixed by the standard; the distribution helpers are hand-rolled because
/// the <random> distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform integer in [lo, hi].
  long long integer(long long lo, long long hi) { return lo + static_cast<long long>(index(static_cast<std::size_t>(hi - lo + 1))); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double exponential(double mean);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace taper
