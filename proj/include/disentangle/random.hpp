#pragma once

#include <cstdint>
#include <limits>

namespace disentangle {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream. The output for draw n is a fixed function of
/// (key, n), and the key is derived from (seed, stream, substream), so that a
/// stream for e.g. (iteration, observation) can be created anywhere without
/// touching shared state. Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0,
                        std::uint64_t substream = 0)
      : key_(mix64(seed + 0x9e3779b97f4a7c15ULL * (mix64(stream + 0x632be59bd9b4e019ULL) ^
                                                   mix64(~substream + 0x85157af5ULL)))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace disentangle
