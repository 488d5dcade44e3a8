#ifndef CURVE_EQUIV_RNG_HPP
#define CURVE_EQUIV_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace curve_equiv {

/// splitmix64 finalizer; full avalanche on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ (b + 0x632BE59BD9B4E019ULL)); }

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix64(mix64(a, b), c); }

/// FNV-1a, used to fold string ids (scenario names) into stream keys.
constexpr std::uint64_t hash_id(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// One independent random stream.  Not shareable between threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  double normal(double mean, double sd) { return mean + sd * std_normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  /// Deterministic child stream keyed by `index`; does not consume state.
  RngStream child(std::uint64_t index) const { return RngStream(mix64(seed_, index)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> std_normal_{0.0, 1.0};
};

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_RNG_HPP
