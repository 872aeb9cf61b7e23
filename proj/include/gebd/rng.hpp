#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace gebd {

// Seeded RNG used by every randomized component. The engine is the fully
// specified mt19937_64; the real-valued transforms are written out here so
// results never depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), n >= 1.
  uint64_t below(uint64_t n);

  // Inclusive integer range.
  int range(int lo, int hi);

  // Standard normal via Box-Muller (pair cached).
  double normal();

  std::vector<double> normal_vec(std::size_t n, double scale = 1.0);

  // Fisher-Yates, consuming below() in a fixed order.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Splitmix-style combiner for deriving per-fold / per-stream seeds.
  static uint64_t mix(uint64_t a, uint64_t b);

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gebd
