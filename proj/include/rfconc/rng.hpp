#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace rfconc {

// SplitMix64 output function. Used as a counter-based generator: the i-th
// output of a stream with key k is mix64(k + i*GAMMA), so any draw can be
// produced without generating its predecessors.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {
constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

// Derives an independent substream key from a root seed, a purpose tag and up
// to three indices. Substreams are schedule-independent: the key depends only
// on (root, tag, indices), never on draw order elsewhere.
inline std::uint64_t substream(std::uint64_t root, std::string_view tag,
                               std::uint64_t a = 0, std::uint64_t b = 0,
                               std::uint64_t c = 0) {
  std::uint64_t k = mix64(root ^ detail::fnv1a(tag));
  k = mix64(k + detail::kGamma * (a + 1));
  k = mix64(k + detail::kGamma * (b + 1));
  k = mix64(k + detail::kGamma * (c + 1));
  return k;
}

// Sequential view of one substream. Gaussians come from Box-Muller (no
// rejection), so the number of uniforms consumed per call is fixed.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return mix64(key_ + (++ctr_) * detail::kGamma); }

  // Uniform in (0, 1].
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rfconc
