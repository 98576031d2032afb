#pragma once

#include <cstdio>
#include <string>

namespace radlab {

/// Decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace radlab
