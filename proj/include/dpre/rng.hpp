#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dpre {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Absorbs one 64-bit word into a running hash state.
constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ (mix64(v + 0x9e3779b97f4a7c15ULL) + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::int64_t v) noexcept {
  return hash_combine(h, static_cast<std::uint64_t>(v));
}

// Maps 64 random bits to a uniform in (0,1] with 53-bit resolution. Never 0.
constexpr double to_unit_open_closed(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// Splittable seed derivation: independent of any scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return hash_combine(mix64(base ^ 0x5851f42d4c957f2dULL), index);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t i, std::uint64_t j) noexcept {
  return derive_seed(derive_seed(base, i), j);
}

// Per-worker generator for the samplers. Seeded through mix64 so nearby
// integer seeds give unrelated streams.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(mix64(seed + 0x2545f4914f6cdd1dULL)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform in (0,1].
  double uniform() { return to_unit_open_closed(engine_()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dpre
