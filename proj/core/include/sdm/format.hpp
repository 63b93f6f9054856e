#pragma once

#include <charconv>
#include <stdexcept>
#include <string>

namespace sdm {

/// Shortest decimal form that parses back to exactly the same double.
/// Every number the library writes goes through this, so outputs are
/// reproducible bit for bit.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

}  // namespace sdm
