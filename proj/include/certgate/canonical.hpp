#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "certgate/errors.hpp"

namespace certgate {

// Canonical text rendering. Two properties matter: the same value always
// renders to the same bytes, and real renderings round-trip exactly
// through strtod. %.17g guarantees both for finite doubles.

inline std::string format_real(double x) {
  if (!std::isfinite(x)) {
    throw InvalidArgument("format_real: non-finite value");
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string format_int(std::int64_t x) {
  return std::to_string(x);
}

// Escapes a string for embedding in a JSON document.
inline std::string json_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

inline std::string json_quote(std::string_view s) {
  return "\"" + json_escape(s) + "\"";
}

}  // namespace certgate
