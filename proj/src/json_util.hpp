#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "har/error.hpp"

// Strict JSON access: unknown keys and type mismatches are config errors
// that name the offending path, so typos in experiment files fail loudly
// instead of silently using defaults.

namespace har::jsonu {

using nlohmann::json;

inline void require_object(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw_config(ctx + ": expected an object");
}

inline void check_keys(const json& j, const std::string& ctx,
                       std::initializer_list<const char*> allowed) {
  require_object(j, ctx);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) throw_config(ctx + ": unknown key \"" + it.key() + "\"");
  }
}

inline double get_num(const json& j, const std::string& key, double def,
                      const std::string& ctx) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) throw_config(ctx + "." + key + ": expected a number");
  return v.get<double>();
}

inline std::uint64_t get_uint(const json& j, const std::string& key,
                              std::uint64_t def, const std::string& ctx) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw_config(ctx + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::string get_str(const json& j, const std::string& key,
                           const std::string& def, const std::string& ctx) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string()) throw_config(ctx + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& key, bool def,
                     const std::string& ctx) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw_config(ctx + "." + key + ": expected a boolean");
  return v.get<bool>();
}

}  // namespace har::jsonu
