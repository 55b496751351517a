#pragma once

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "weatherseg/error.hpp"

// Tree-structured configuration. Files are YAML (JSON is a subset); they are
// read into a JSON tree so that every module shares one representation for
// parsing, echoing into outputs and hashing.
namespace weatherseg::config {

using Json = nlohmann::json;

// Read-only view of one object in the tree, remembering its dotted path so
// errors can name the offending key.
class Node {
 public:
  Node(const Json* json, std::string path) : json_(json), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }
  std::string key_path(std::string_view key) const;
  bool has(std::string_view key) const;
  const Json& raw() const { return *json_; }

  // Missing keys give an empty object node.
  Node child(std::string_view key) const;
  std::vector<Node> list(std::string_view key) const;

  double number(std::string_view key, std::optional<double> fallback = std::nullopt) const;
  long long integer(std::string_view key, std::optional<long long> fallback = std::nullopt) const;
  bool boolean(std::string_view key, std::optional<bool> fallback = std::nullopt) const;
  std::string string(std::string_view key,
                     std::optional<std::string> fallback = std::nullopt) const;
  std::vector<double> numbers(std::string_view key,
                              std::optional<std::vector<double>> fallback = std::nullopt) const;
  std::vector<long long> integers(
      std::string_view key, std::optional<std::vector<long long>> fallback = std::nullopt) const;
  std::vector<std::string> strings(
      std::string_view key, std::optional<std::vector<std::string>> fallback = std::nullopt) const;

  // Rejects keys outside `allowed`.
  void allow_only(std::initializer_list<std::string_view> allowed) const;

 private:
  const Json* find(std::string_view key) const;
  const Json& require(std::string_view key) const;

  const Json* json_;
  std::string path_;
};

Json parse_yaml(const std::string& text);
Json load_file(const std::filesystem::path& path);

// Sets `dotted.key.path` to `value` (parsed as a YAML scalar or flow
// sequence), creating intermediate objects.
void apply_override(Json& root, std::string_view dotted_key, std::string_view value);

// Stable 16-hex-digit hash of a tree (object keys are sorted on dump).
std::string hash_hex(const Json& tree);

}  // namespace weatherseg::config
