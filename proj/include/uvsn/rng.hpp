#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace uvsn {

// Deterministic, serializable random stream (splitmix64). Every random draw
// in the project goes through this class so that a run is reproducible from
// its seed alone and training state can be checkpointed exactly: the whole
// stream state is one u64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. No cached spare: the state stays a
  // single u64, which keeps checkpoint serialization trivial.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t lim = ~0ull - ~0ull % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= lim);
    return x % n;
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Derived stream for work item `index` (per-video generation etc.).
  // Serial and parallel consumers that fork the same indices see identical
  // streams, independent of consumption order on the parent.
  Rng fork(std::uint64_t index) const {
    Rng child(state_ ^ (0xD1B54A32D192ED03ull * (index + 1)));
    child.next_u64();  // decorrelate from the raw key
    return child;
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

}  // namespace uvsn
