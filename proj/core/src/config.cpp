#include "weatherseg/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "weatherseg/rng.hpp"

namespace weatherseg::config {
namespace {

Json from_yaml(const YAML::Node& node, const std::string& where) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      Json arr = Json::array();
      for (std::size_t i = 0; i < node.size(); ++i) {
        arr.push_back(from_yaml(node[i], where + "[" + std::to_string(i) + "]"));
      }
      return arr;
    }
    case YAML::NodeType::Map: {
      Json obj = Json::object();
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        obj[key] = from_yaml(kv.second, where.empty() ? key : where + "." + key);
      }
      return obj;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "null" || s == "~") return nullptr;
  {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (!s.empty() && end == s.c_str() + s.size()) return v;
  }
  {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (!s.empty() && end == s.c_str() + s.size() && std::isfinite(v)) return v;
  }
  return s;
}

std::string kind_name(const Json& j) {
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_array()) return "list";
  if (j.is_object()) return "mapping";
  return "null";
}

}  // namespace

std::string Node::key_path(std::string_view key) const {
  return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
}

const Json* Node::find(std::string_view key) const {
  if (!json_ || !json_->is_object()) return nullptr;
  auto it = json_->find(std::string(key));
  if (it == json_->end() || it->is_null()) return nullptr;
  return &*it;
}

const Json& Node::require(std::string_view key) const {
  const Json* j = find(key);
  if (!j) throw ConfigError(key_path(key), "required key is missing");
  return *j;
}

bool Node::has(std::string_view key) const { return find(key) != nullptr; }

Node Node::child(std::string_view key) const {
  static const Json kEmpty = Json::object();
  const Json* j = find(key);
  if (!j) return Node(&kEmpty, key_path(key));
  if (!j->is_object()) throw ConfigError(key_path(key), "expected a mapping, got " + kind_name(*j));
  return Node(j, key_path(key));
}

std::vector<Node> Node::list(std::string_view key) const {
  std::vector<Node> out;
  const Json* j = find(key);
  if (!j) return out;
  if (!j->is_array()) throw ConfigError(key_path(key), "expected a list, got " + kind_name(*j));
  for (std::size_t i = 0; i < j->size(); ++i) {
    out.emplace_back(&(*j)[i], key_path(key) + "[" + std::to_string(i) + "]");
  }
  return out;
}

double Node::number(std::string_view key, std::optional<double> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_number()) throw ConfigError(key_path(key), "expected a number, got " + kind_name(*j));
  return j->get<double>();
}

long long Node::integer(std::string_view key, std::optional<long long> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_number_integer())
    throw ConfigError(key_path(key), "expected an integer, got " + kind_name(*j));
  return j->get<long long>();
}

bool Node::boolean(std::string_view key, std::optional<bool> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_boolean()) throw ConfigError(key_path(key), "expected a boolean, got " + kind_name(*j));
  return j->get<bool>();
}

std::string Node::string(std::string_view key, std::optional<std::string> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_string()) throw ConfigError(key_path(key), "expected a string, got " + kind_name(*j));
  return j->get<std::string>();
}

std::vector<double> Node::numbers(std::string_view key,
                                  std::optional<std::vector<double>> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_array()) throw ConfigError(key_path(key), "expected a list, got " + kind_name(*j));
  std::vector<double> out;
  for (const auto& e : *j) {
    if (!e.is_number()) throw ConfigError(key_path(key), "expected a list of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<long long> Node::integers(std::string_view key,
                                      std::optional<std::vector<long long>> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_array()) throw ConfigError(key_path(key), "expected a list, got " + kind_name(*j));
  std::vector<long long> out;
  for (const auto& e : *j) {
    if (!e.is_number_integer()) throw ConfigError(key_path(key), "expected a list of integers");
    out.push_back(e.get<long long>());
  }
  return out;
}

std::vector<std::string> Node::strings(std::string_view key,
                                       std::optional<std::vector<std::string>> fallback) const {
  const Json* j = find(key);
  if (!j) {
    if (fallback) return *fallback;
    require(key);
  }
  if (!j->is_array()) throw ConfigError(key_path(key), "expected a list, got " + kind_name(*j));
  std::vector<std::string> out;
  for (const auto& e : *j) {
    if (!e.is_string()) throw ConfigError(key_path(key), "expected a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

void Node::allow_only(std::initializer_list<std::string_view> allowed) const {
  if (!json_ || !json_->is_object()) return;
  for (const auto& [k, v] : json_->items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError(key_path(k), "unknown key");
  }
}

Json parse_yaml(const std::string& text) {
  try {
    return from_yaml(YAML::Load(text), "");
  } catch (const YAML::Exception& e) {
    throw ConfigError("<root>", std::string("malformed YAML: ") + e.what());
  }
}

Json load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Json j = parse_yaml(ss.str());
  if (j.is_null()) j = Json::object();
  if (!j.is_object()) throw ConfigError("<root>", "config root must be a mapping");
  return j;
}

void apply_override(Json& root, std::string_view dotted_key, std::string_view value) {
  if (dotted_key.empty()) throw ConfigError("<override>", "empty key");
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part(dotted_key.substr(start, dot - start));
    if (part.empty()) throw ConfigError(std::string(dotted_key), "malformed dotted key");
    if (!node->is_object()) {
      throw ConfigError(std::string(dotted_key.substr(0, start ? start - 1 : 0)),
                        "cannot descend into a non-mapping value");
    }
    if (dot == std::string_view::npos) {
      (*node)[part] = parse_yaml(std::string(value));
      return;
    }
    Json& next = (*node)[part];
    if (next.is_null()) next = Json::object();
    node = &next;
    start = dot + 1;
  }
}

std::string hash_hex(const Json& tree) {
  const std::uint64_t h = fnv1a64(tree.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace weatherseg::config
