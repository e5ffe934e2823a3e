#pragma once

// JSON / JSON-lines helpers shared by the file-facing modules.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace drivevqa {

// Object keys keep document order, so adapters stream deterministically.
using json = nlohmann::ordered_json;

/// A document node that does not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string location, std::string expected, std::string found)
      : std::runtime_error("schema error at " + location + ": expected " + expected +
                           ", found " + found),
        location_(std::move(location)),
        expected_(std::move(expected)),
        found_(std::move(found)) {}

  const std::string& location() const noexcept { return location_; }
  const std::string& expected() const noexcept { return expected_; }
  const std::string& found() const noexcept { return found_; }

 private:
  std::string location_;
  std::string expected_;
  std::string found_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string describe_json(const json& node) {
  if (node.is_null()) return "null";
  std::string s = node.dump();
  if (s.size() > 60) s = s.substr(0, 57) + "...";
  return std::string(node.type_name()) + " " + s;
}

inline std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.filename().string(), "valid JSON", e.what());
  }
}

/// Calls `fn(doc, line_number)` for each non-blank line (1-based numbering).
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(location(path, number), "a JSON object", e.what());
    }
    if (!doc.is_object()) throw SchemaError(location(path, number), "a JSON object", describe_json(doc));
    fn(doc, number);
  }
}

inline const json& require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + "/" + key, "a value", "nothing");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(where + "/" + key, "string", describe_json(v));
  return v.get<std::string>();
}

inline std::string require_string(const json& obj, const char* key,
                                  const std::filesystem::path& path, std::size_t line) {
  return require_string(obj, key, location(path, line));
}

/// One compact JSON document per line.
inline void write_jsonl_line(std::ostream& out, const json& doc) {
  out << doc.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

}  // namespace drivevqa
