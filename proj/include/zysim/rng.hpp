#ifndef ZYSIM_RNG_HPP
#define ZYSIM_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace zysim {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; used only to turn a stream name into a seed salt.
inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seedable 64-bit generator with portable draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The std distributions are not, so uniform() and bernoulli()
/// are implemented here to keep runs bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for a named subsystem. Adding a new stream never
  /// changes the draws seen by existing ones.
  static Rng stream(std::uint64_t master, std::string_view name,
                    std::uint64_t index = 0) {
    return Rng(splitmix64(splitmix64(master ^ fnv1a(name)) + index));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, bound]; bound >= 0.
  std::uint64_t below_or_equal(std::uint64_t bound) {
    if (bound == 0) return 0;
    if (bound == UINT64_MAX) return engine_();
    const std::uint64_t range = bound + 1;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % range;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace zysim

#endif  // ZYSIM_RNG_HPP
