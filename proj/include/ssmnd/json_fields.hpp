#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ssmnd/errors.hpp"

namespace ssmnd {

using Json = nlohmann::json;

/// Typed access to the members of one JSON object. Failures raise ConfigError
/// naming the full field path; finish() rejects members that were never read.
class JsonFields {
 public:
  JsonFields(const Json& obj, std::string path) : obj_(&obj), path_(std::move(path)) {
    if (!obj.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return obj_->contains(key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    if (!obj_->contains(key)) throw ConfigError(field(key), "missing required field");
    return obj_->at(key);
  }

  template <class T>
  T get(const std::string& key) {
    return convert<T>(raw(key), field(key));
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!obj_->contains(key)) return fallback;
    return convert<T>(obj_->at(key), field(key));
  }

  std::size_t positive(const std::string& key) {
    const auto v = get<std::size_t>(key);
    if (v == 0) throw ConfigError(field(key), "must be positive");
    return v;
  }

  std::size_t positive(const std::string& key, std::size_t fallback) {
    const auto v = get<std::size_t>(key, fallback);
    if (v == 0) throw ConfigError(field(key), "must be positive");
    return v;
  }

  std::vector<std::size_t> extents(const std::string& key) {
    const Json& arr = raw(key);
    if (!arr.is_array() || arr.empty()) throw ConfigError(field(key), "expected a non-empty array");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = field(key) + "[" + std::to_string(i) + "]";
      const auto v = convert<std::size_t>(arr[i], p);
      if (v == 0) throw ConfigError(p, "must be positive");
      out.push_back(v);
    }
    return out;
  }

  void finish() const {
    for (auto it = obj_->begin(); it != obj_->end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
  }

  template <class T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
        throw ConfigError(path, std::is_unsigned_v<T> ? "expected a non-negative integer" : "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
    }
    return v.get<T>();
  }

 private:
  const Json* obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace ssmnd
