#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace advpatch {

// Deterministic RNG used everywhere in place of std:: distributions, whose
// output is implementation-defined. xoshiro256** seeded through splitmix64,
// uniform/normal draws with a fixed algorithm, so artifacts are reproducible
// bit-for-bit across runs and compilers.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Derives an independent stream from a seed plus a list of stream ids
  // (purpose tag, indices...). Used to hand each scene/batch/candidate its
  // own deterministic stream regardless of evaluation order.
  template <typename... Ids>
  static Rng stream(std::uint64_t seed, Ids... ids) {
    std::uint64_t sm = seed;
    (void)splitmix64(sm);
    ((sm ^= splitmix64(sm) + static_cast<std::uint64_t>(ids),
      (void)splitmix64(sm)),
     ...);
    return Rng(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // unbiased integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Box-Muller; the sine branch is discarded to keep the stream stateless.
  double normal(double mean = 0.0, double sigma = 1.0) {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Samples an index from unnormalized nonnegative weights.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = uniform01() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      x -= weights[i];
      if (x < 0.0) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Stream purpose tags; combined with the master seed and loop indices.
namespace stream_tag {
inline constexpr std::uint64_t kScene = 0x01;
inline constexpr std::uint64_t kSplit = 0x02;
inline constexpr std::uint64_t kBatchShuffle = 0x03;
inline constexpr std::uint64_t kModelInit = 0x04;
inline constexpr std::uint64_t kTrainShuffle = 0x05;
inline constexpr std::uint64_t kPatchInit = 0x06;
inline constexpr std::uint64_t kTransformInit = 0x07;
inline constexpr std::uint64_t kAugment = 0x08;
inline constexpr std::uint64_t kRestart = 0x09;
inline constexpr std::uint64_t kAssignment = 0x0a;
inline constexpr std::uint64_t kSim = 0x0b;
}  // namespace stream_tag

}  // namespace advpatch
