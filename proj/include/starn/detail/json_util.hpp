#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "starn/error.hpp"

namespace starn::detail {

// Reads optional fields from a JSON object, reporting errors with a field
// path ("train.gamma") and rejecting keys that are not consumed.
class JsonFields {
public:
    JsonFields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(where(key) + e.what());
        }
    }

    const nlohmann::json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string child_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(where(it.key().c_str()) + "unknown field");
        }
    }

private:
    std::string where(const char* key) const {
        std::string p = path_;
        if (key && *key) p = p.empty() ? key : p + "." + key;
        return "config field '" + p + "': ";
    }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace starn::detail
