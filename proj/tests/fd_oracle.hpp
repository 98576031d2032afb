#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "radlab/matrix.hpp"

namespace fd {

// Central differences over every entry of every tensor. Returns the worst
// per-tensor relative error ‖g − g_fd‖ / max(‖g‖, ‖g_fd‖, floor).
inline double worst_relative_error(const std::function<double(const std::vector<radlab::Matrix>&)>& f,
                                   std::vector<radlab::Matrix> params,
                                   const std::vector<radlab::Matrix>& analytic, double h = 1e-5,
                                   double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double orig = params[p].data()[k];
      params[p].data()[k] = orig + h;
      const double up = f(params);
      params[p].data()[k] = orig - h;
      const double down = f(params);
      params[p].data()[k] = orig;
      const double num = (up - down) / (2.0 * h);
      const double ana = analytic[p].data()[k];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

}  // namespace fd
