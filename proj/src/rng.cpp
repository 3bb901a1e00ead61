#include "mgnm/rng.hpp"

#include <cmath>
#include <numeric>
#include <utility>

namespace mgnm::rng {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash(std::string_view text, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

double uniform01(std::uint64_t key, std::uint64_t counter) noexcept {
  const std::uint64_t bits = splitmix64(key ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double normal(std::uint64_t key, std::uint64_t counter) noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(key, counter);
  const double u2 = uniform01(key, counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t Stream::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const std::uint64_t bits = splitmix64(key_ ^ splitmix64(counter_++ + 0x632be59bd9b4e019ULL));
    if (bits < limit) return bits % n;
  }
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Stream stream(key);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace mgnm::rng
