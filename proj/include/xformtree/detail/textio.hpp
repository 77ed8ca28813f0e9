#pragma once

#include <cstdio>
#include <string>

namespace xformtree::detail {

/// Formats a double with 17 significant digits, enough to round-trip any
/// binary64 value through text exactly.
inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace xformtree::detail
