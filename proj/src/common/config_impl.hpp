#pragma once

#include "common/errors.hpp"

namespace ehrgen {

template <class T>
T yaml_get(const YAML::Node& node, const std::string& key, const T& fallback, const std::string& source) {
  const YAML::Node v = node[key];
  if (!v) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(source + ": field '" + key + "' has the wrong type");
  }
}

template <class T>
T yaml_require(const YAML::Node& node, const std::string& key, const std::string& source) {
  if (!node[key]) throw ValidationError(source + ": missing required field '" + key + "'");
  return yaml_get<T>(node, key, T{}, source);
}

}  // namespace ehrgen
