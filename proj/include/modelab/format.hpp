#ifndef MODELAB_FORMAT_HPP
#define MODELAB_FORMAT_HPP

#include <charconv>
#include <string>
#include <string_view>

#include "modelab/errors.hpp"
#include "modelab/types.hpp"

namespace modelab {

/// Shortest round-trip decimal form; deterministic across runs.
inline std::string fmt_real(real v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

inline real parse_real(std::string_view s) {
  real v = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw IoError("cannot parse real value '" + std::string(s) + "'");
  }
  return v;
}

inline long parse_int(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError("cannot parse integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace modelab

#endif
