#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "radlab/matrix.hpp"

namespace radlab {

struct SynthConfig {
  std::size_t pretrain_count = 200;    // N
  std::size_t downstream_count = 32;   // n
  std::size_t dim = 16;                // d
  std::size_t patches = 1;             // K; 1 gives flat N×d data
  std::size_t classes = 2;             // 2 = binary ±1 labels, otherwise one-hot
  double c1_target = 0.1;
  double c2_target = 0.1;
  double margin = 0.1;
  std::size_t max_rescales = 3;
  std::size_t depth_for_warning = 0;   // L; 0 disables the sample-size warning
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthTask {
  // K = 1: pretrain_raw is N×d and downstream_x is n×d.
  // K > 1: the patch vectors hold K×d samples and the flat matrices are empty.
  Matrix pretrain_raw;
  Matrix downstream_x;
  std::vector<Matrix> pretrain_patches;
  std::vector<Matrix> downstream_patches;
  Matrix labels;    // n×1 of ±1, or n×o one-hot
  Matrix w_star;    // o×d planted rule (1×d for binary)
  double c1 = 0.0;  // achieved minimum pairwise distances
  double c2 = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Gaussian points accepted only when at distance ≥ target from every earlier
/// point; after 10·count consecutive rejections the sampling scale grows by
/// 1.5, and after max_rescales growths generation fails. Downstream labels come
/// from the planted rule with points inside the margin resampled.
SynthTask gen_synth(const SynthConfig& cfg);

/// Minimum pairwise Frobenius distance between rows (or samples).
double min_pairwise_distance(const Matrix& rows);
double min_pairwise_distance(const std::vector<Matrix>& samples);

/// Planted-rule label of one flattened sample (patch samples use 1ᵀX).
Matrix planted_label(const Matrix& w_star, std::span<const double> x);

/// Warning text when N < n^{3/2} L^{2/3}.
std::optional<std::string> sample_size_warning(std::size_t big_n, std::size_t small_n, std::size_t depth);

}  // namespace radlab
