#include "common/config.hpp"

#include <algorithm>

#include "common/csv.hpp"
#include "common/errors.hpp"

namespace ehrgen {

YAML::Node parse_yaml(const std::string& text, const std::string& source) {
  try {
    YAML::Node n = YAML::Load(text);
    if (n.IsNull()) return YAML::Node(YAML::NodeType::Map);
    return n;
  } catch (const YAML::Exception& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

YAML::Node load_yaml(const std::filesystem::path& path) { return parse_yaml(read_file(path), path.string()); }

void check_keys(const YAML::Node& node, const std::vector<std::string>& allowed, const std::string& source) {
  if (!node.IsMap()) throw ValidationError(source + ": expected a key-value mapping");
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError(source + ": unknown field '" + key + "'");
    }
  }
}

}  // namespace ehrgen
