#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "radlab/matrix.hpp"

namespace radlab {

/// Counter-based 64-bit generator. Output i of a stream is
/// splitmix64_finalize(key + (i + 1) * 0x9E3779B97F4A7C15) where
/// key = splitmix64_finalize(seed ^ splitmix64_finalize(stream_id)).
/// Named streams (mask, rademacher, init, batch, ...) give independent
/// sequences from one user seed.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream_id);
  Rng(std::uint64_t seed, std::string_view stream_name);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal by Box–Muller; consumes two draws per call.
  double normal();
  /// ±1 with equal probability.
  double sign();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// k distinct indices from [0, n) by partial Fisher–Yates.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_finalize(std::uint64_t z);
std::uint64_t stream_id(std::string_view name);

/// Matrix of i.i.d. N(0, variance) entries.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double variance, Rng& rng);

}  // namespace radlab
