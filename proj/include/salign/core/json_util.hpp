// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>

#include <json.hpp>

namespace salign {

nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path, const nlohmann::json& value);

// Throws ConfigError when `obj` holds a key outside `allowed`. Configs are
// parsed strictly so a misspelled threshold name cannot pass silently.
void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context);

}  // namespace salign
