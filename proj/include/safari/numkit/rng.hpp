#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace safari::numkit {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used to turn stream purpose labels into 64-bit keys.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/**
 * Counter-based generator: the n-th draw is mix64(key + n * golden).
 *
 * Output depends only on (seed, number of draws so far), so two generators
 * constructed from the same seed and driven through the same call sequence
 * produce the same stream on every platform. Normal variates use Box-Muller
 * rather than std::normal_distribution, whose algorithm is unspecified.
 */
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), key_(mix64(seed ^ 0x5afa41a5afa41aULL)) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive). Uses rejection to stay unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return lo + static_cast<std::int64_t>(r % span);
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  /// Independent child stream keyed by (this seed, purpose, index). Does not advance this generator.
  [[nodiscard]] Rng derive(std::string_view purpose, std::uint64_t index = 0) const noexcept {
    return Rng(derive_seed(seed_, purpose, index));
  }

  static constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                             std::uint64_t index = 0) noexcept {
    return mix64(mix64(seed ^ hash_label(purpose)) + (index + 1) * kGolden);
  }

  friend bool operator==(const Rng& a, const Rng& b) noexcept {
    return a.seed_ == b.seed_ && a.counter_ == b.counter_ && a.has_spare_ == b.has_spare_ &&
           (!a.has_spare_ || a.spare_ == b.spare_);
  }

private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace safari::numkit
