#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lfi/error.hpp"

namespace lfi {

/// Throws ConfigError naming the first key of `j` not in `allowed`.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                               const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known |= (a == key);
    if (!known) throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

template <typename T>
T json_get(const nlohmann::json& j, const char* key, const std::string& context) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(context + "." + key + ": " + e.what());
  }
}

template <typename T>
void json_read(const nlohmann::json& j, const char* key, T& out, const std::string& context) {
  if (j.contains(key)) out = json_get<T>(j, key, context);
}

}  // namespace lfi
