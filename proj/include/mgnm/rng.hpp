#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mgnm::rng {

// Everything here is bit-exact across platforms: no std:: distributions.

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `text`, mixed with `seed`.
std::uint64_t hash(std::string_view text, std::uint64_t seed = 0) noexcept;

/// Uniform double in [0, 1) drawn from the counter-based stream (key, counter).
double uniform01(std::uint64_t key, std::uint64_t counter) noexcept;

/// Standard normal via Box-Muller on two counter draws.
double normal(std::uint64_t key, std::uint64_t counter) noexcept;

/// Sequential generator over the counter-based stream.
class Stream {
 public:
  explicit Stream(std::uint64_t key) noexcept : key_(key) {}

  double uniform() noexcept { return uniform01(key_, counter_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Integer in [lo, hi].
  int range(int lo, int hi) noexcept { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }
  double normal() noexcept { return rng::normal(key_, (counter_ += 2) - 2); }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t key);

}  // namespace mgnm::rng
