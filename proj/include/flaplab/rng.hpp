#pragma once

#include <cstdint>

namespace flaplab {

// splitmix64 finalizer. Used to expand a user seed into generator state and
// to derive independent per-episode seeds from a run seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for the i-th member of a stream derived from `base`. Different
// stream tags give unrelated sequences for the same base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
  return splitmix64(splitmix64(base ^ splitmix64(stream)) + index);
}

/// xorshift64* (Vigna 2014): state ^= state >> 12; state ^= state << 25;
/// state ^= state >> 27; output = state * 0x2545F4914F6CDD1D.
///
/// Every draw is defined here in terms of integer arithmetic only, so a
/// (seed, call sequence) pair produces the same values on every platform.
/// The standard <random> distributions are avoided for that reason.
class Xorshift64Star {
 public:
  using result_type = std::uint64_t;

  Xorshift64Star() noexcept : Xorshift64Star(0) {}
  explicit Xorshift64Star(std::uint64_t seed) noexcept { this->seed(seed); }

  void seed(std::uint64_t seed) noexcept {
    state_ = splitmix64(seed);
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;  // zero is a fixed point
  }

  std::uint64_t next() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  std::uint64_t operator()() noexcept { return next(); }
  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

  // Uniform double in [0, 1) from the top 53 bits.
  double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer in [lo, hi] by rejection (no modulo bias).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next());
    const std::uint64_t limit = max() - max() % span;
    std::uint64_t draw = next();
    while (draw >= limit) draw = next();
    return lo + static_cast<std::int64_t>(draw % span);
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  std::uint64_t state() const noexcept { return state_; }
  void set_state(std::uint64_t s) noexcept { state_ = s == 0 ? 1 : s; }

  friend bool operator==(const Xorshift64Star&, const Xorshift64Star&) = default;

 private:
  std::uint64_t state_ = 0;
};

}  // namespace flaplab
