#pragma once

#include "ssu/common.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace ssu {

using Json = nlohmann::json;

// Field-by-field object reader that rejects unknown keys: every key in the
// document must be consumed by a get()/require() call before finish().
class JsonReader {
  public:
    JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
    }

    template <typename T>
    T get(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        return read<T>(key);
    }

    template <typename T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": missing required field");
        return read<T>(key);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key()))
                throw ConfigError(path_ + "." + it.key() + ": unknown config key");
        }
    }

    const std::string& path() const { return path_; }

  private:
    template <typename T>
    T read(const std::string& key) {
        try {
            return j_.at(key).get<T>();
        } catch (const Json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace ssu
