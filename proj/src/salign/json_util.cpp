// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/core/json_util.hpp"

#include <algorithm>
#include <fstream>

#include "salign/core/errors.hpp"

namespace salign {

nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open JSON file: " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void save_json_file(const std::filesystem::path& path, const nlohmann::json& value) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write JSON file: " + path.string());
    out << value.dump(2) << "\n";
}

void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
    for (const auto& item : obj.items()) {
        bool known = std::any_of(allowed.begin(), allowed.end(),
                                 [&](const char* k) { return item.key() == k; });
        if (!known) throw ConfigError(context + ": unknown key \"" + item.key() + "\"");
    }
}

}  // namespace salign
