#pragma once

#include <cstdint>

namespace bmk::data {

/// Counter-based generator: the n-th draw of stream s under seed k is
/// mix(k, s, n), so any stream can be replayed without touching others.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t z = splitmix(seed ^ splitmix(stream + 0x632be59bd9b4e019ULL));
    return splitmix(z ^ (counter * 0xd1b54a32d192ed03ULL));
  }

  std::uint64_t next_u64() { return mix(seed_, stream_, counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace bmk::data
