#pragma once

// Strict JSON object reading for configs: every field must be consumed, and
// errors name the offending field path.

#include <json.hpp>
#include <set>
#include <stdexcept>
#include <string>

namespace relsim {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a JSON object");
  }

  ObjectReader(nlohmann::json&&, std::string) = delete;

  std::string field_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(field_path(key), "missing required field");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key) {
    const auto& v = raw(key);
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(field_path(key), std::string("wrong type (") + e.what() + ")");
    }
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return get<T>(key);
  }

  /// Throws if the object carries a key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field_path(it.key()), "unknown field");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace relsim
