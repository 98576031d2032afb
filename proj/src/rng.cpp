#include "radlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace radlab {

std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t stream_id(std::string_view name) {
  // FNV-1a
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::uint64_t id)
    : key_(splitmix64_finalize(seed ^ splitmix64_finalize(id))) {}

Rng::Rng(std::uint64_t seed, std::string_view stream_name) : Rng(seed, stream_id(stream_name)) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64_finalize(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) return 0;
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t bound = n;
  const std::uint64_t limit = -bound % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    const __uint128_t m = static_cast<__uint128_t>(x) * bound;
    if (static_cast<std::uint64_t>(m) >= limit) return static_cast<std::size_t>(m >> 64);
  }
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double variance, Rng& rng) {
  Matrix m(rows, cols);
  const double sd = std::sqrt(variance);
  for (double& x : m.data()) x = sd * rng.normal();
  return m;
}

}  // namespace radlab
