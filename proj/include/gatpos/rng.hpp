#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace gatpos {

// One splitmix64 step; advances the state and returns the next output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (master, split, run).
// Documented in the config reference; every reported number is a pure
// function of the master seed through this mixer.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t split,
                              std::uint64_t run) {
  std::uint64_t s = master;
  std::uint64_t out = splitmix64(s);
  s ^= (split + 1) * 0xd1b54a32d192ed03ULL;
  out ^= splitmix64(s);
  s ^= (run + 1) * 0x8cb92ba72f3d8dd7ULL;
  out ^= splitmix64(s);
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Fisher-Yates; portable across standard libraries (std::shuffle is not)
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gatpos
