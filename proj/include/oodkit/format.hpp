#pragma once

#include <charconv>
#include <string>
#include <string_view>

namespace oodkit {

// Shortest decimal string that round-trips to the same double. Locale
// independent, so CSV output is byte-stable across environments.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Quotes a CSV field only when it contains a separator, quote or newline.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace oodkit
