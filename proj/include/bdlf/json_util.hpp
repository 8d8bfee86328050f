#pragma once

#include "json.hpp"

#include <initializer_list>
#include <stdexcept>
#include <string>

namespace bdlf {

using Json = nlohmann::json;

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace json_util {

/// Reads `key` into `out` when present; type errors name the field. Nested
/// sections raise ConfigError with their own full path, which passes through.
template <class V>
void read(const Json& j, const std::string& section, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

inline void require_object(const Json& j, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
}

inline void reject_unknown(const Json& j, const std::string& section,
                           std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(section + "." + it.key() + ": unknown field");
  }
}

inline void check(bool condition, const std::string& field, const std::string& message) {
  if (!condition) throw ConfigError(field + ": " + message);
}

}  // namespace json_util
}  // namespace bdlf
