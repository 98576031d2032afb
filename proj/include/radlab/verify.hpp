#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "radlab/matrix.hpp"

namespace radlab {

/// Worst per-tensor relative error ‖g − g_fd‖ / max(‖g‖, ‖g_fd‖, 1e-8) of
/// `grads` against central differences of `f` with step h.
double gradient_check(const std::function<double(const std::vector<Matrix>&)>& f, std::vector<Matrix> params,
                      const std::vector<Matrix>& grads, double h = 1e-5);

struct CheckResult {
  std::string name;
  std::size_t passed = 0;
  std::size_t total = 0;
  double worst = 0.0;  // worst observed error or ratio, check-specific

  bool ok() const { return passed == total; }
};

/// Gradient checks, inner-sup closed forms, contraction and norm growth,
/// fixed point, TV, Ruhe, bound monotonicity, Moreau gradient and the file
/// format round trips.
std::vector<CheckResult> run_property_suite(std::uint64_t seed);

}  // namespace radlab
