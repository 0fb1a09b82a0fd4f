#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "certgate/canonical.hpp"
#include "certgate/errors.hpp"
#include "certgate/rng.hpp"

namespace certgate {

// A parameter value: integer, real, or categorical token.
using ParamValue = std::variant<std::int64_t, double, std::string>;

inline std::string render_param(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return format_int(*i);
  if (const auto* r = std::get_if<double>(&v)) return format_real(*r);
  return std::get<std::string>(v);
}

// Reads a value as a real, promoting integers.
inline double param_as_real(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) {
    return static_cast<double>(*i);
  }
  if (const auto* r = std::get_if<double>(&v)) return *r;
  throw InvalidArgument("param_as_real: categorical value");
}

// An immutable named-parameter assignment. The id is a content hash of
// the canonical rendering, so equal parameter maps share an id and any
// edit produces a fresh one.
struct Configuration {
  std::map<std::string, ParamValue> params;
  std::string id;

  static Configuration make(std::map<std::string, ParamValue> params) {
    Configuration c;
    c.params = std::move(params);
    c.id = hash_id(canonical_of(c.params));
    return c;
  }

  // "name=value;name=value" with names in sorted order, reals in
  // round-trip form. This is the byte sequence the id hashes.
  std::string canonical() const { return canonical_of(params); }

  const ParamValue& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) {
      throw InvalidArgument("configuration has no parameter '" + name + "'");
    }
    return it->second;
  }

  bool has(const std::string& name) const { return params.count(name) != 0; }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.id == b.id;
  }

 private:
  static std::string canonical_of(const std::map<std::string, ParamValue>& p) {
    std::string out;
    bool first = true;
    for (const auto& [name, value] : p) {
      if (!first) out += ';';
      first = false;
      out += name;
      out += '=';
      out += render_param(value);
    }
    return out;
  }

  static std::string hash_id(std::string_view canonical) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
  }
};

}  // namespace certgate
