#pragma once

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <string>
#include <vector>

namespace ehrgen {

// Loads a YAML mapping; missing file or parse error becomes ValidationError naming the path.
YAML::Node load_yaml(const std::filesystem::path& path);
YAML::Node parse_yaml(const std::string& text, const std::string& source);

// Rejects keys not in `allowed` so typos in config files surface as errors.
void check_keys(const YAML::Node& node, const std::vector<std::string>& allowed, const std::string& source);

template <class T>
T yaml_get(const YAML::Node& node, const std::string& key, const T& fallback, const std::string& source);

template <class T>
T yaml_require(const YAML::Node& node, const std::string& key, const std::string& source);

}  // namespace ehrgen

#include "common/config_impl.hpp"
