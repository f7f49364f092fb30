#pragma once

// Number formatting shared by every file emitter. Doubles are rendered with
// std::to_chars and no explicit precision: the shortest string that parses
// back to the identical bit pattern. This is what makes rerun outputs
// byte-identical instead of merely numerically close.

#include <charconv>
#include <cstdint>
#include <string>

namespace tangentlab {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_int(long long v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace tangentlab
