#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace tracelab {

// splitmix64 generator. The standard <random> engines are deterministic but the
// distributions are not specified bit-exactly, so everything that must be
// reproducible byte-for-byte goes through this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, n). Lemire reduction; n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(below(v.size()))];
  }

 private:
  std::uint64_t state_;
};

// FNV-1a over arbitrary bytes, used for feature hashing and config hashes.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Stable per-stage seed derivation: one root seed fans out to independent
// streams keyed by a tag string.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = fnv1a64(tag);
  h ^= root + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  // One splitmix round to decorrelate nearby roots.
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

}  // namespace tracelab
