#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace fedpalm {

// splitmix64 finalizer; also used to derive sub-stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Deterministic 64-bit generator: xoshiro256** seeded through splitmix64.
// Identical seeds give identical streams on every platform (pure u64 ops).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0,1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Box-Muller; consumes two uniforms per pair, caches the spare.
  double normal(double mean = 0.0, double stddev = 1.0);

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t state_[4];
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Sub-stream derivation: seed combined with a tag list through mix64.
// Used for per-(client, round) training streams and per-purpose init
// streams so that adding or removing one consumer never shifts another.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Well-known stream tags.
namespace stream {
inline constexpr std::uint64_t kInitClosed = 0x11;
inline constexpr std::uint64_t kInitOpen = 0x12;
inline constexpr std::uint64_t kRound = 0x21;
inline constexpr std::uint64_t kSynthIdentity = 0x31;
inline constexpr std::uint64_t kSynthSample = 0x32;
inline constexpr std::uint64_t kSynthDomain = 0x33;
inline constexpr std::uint64_t kSplit = 0x41;
}  // namespace stream

}  // namespace fedpalm
