#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"

namespace taper {

/// Rejects keys of `j` that `known` does not have.
inline void reject_unknown_keys(const nlohmann::json& j, const nlohmann::json& known, const std::string& context) {
  if (!j.is_object()) throw std::invalid_argument(context + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument(context + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& field, const std::string& context) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(context + "." + key + ": " + e.what());
  }
}

}  // namespace taper
