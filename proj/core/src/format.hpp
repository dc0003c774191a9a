#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

namespace cssl::detail {

// Fixed textual form for CSV output; identical inputs give identical bytes.
inline std::string fmt_double(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(9);
  os << v;
  return os.str();
}

inline std::string fmt_optional(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string{};
}

}  // namespace cssl::detail
