// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "salign/nn/layers.hpp"
#include "salign/nn/tensor.hpp"

namespace salign::nn {

// Versioned checkpoint container: magic + version + JSON header + raw
// little-endian float32 tensor payloads in header order. Loading refuses
// mismatched magic/version; loading then saving is byte-lossless.
inline constexpr std::uint32_t kContainerVersion = 1;

void save_container(const std::filesystem::path& path, const nlohmann::json& header,
                    const std::map<std::string, Var>& named_params);

struct LoadedContainer {
    nlohmann::json header;
    std::map<std::string, Tensor> tensors;
};

LoadedContainer load_container(const std::filesystem::path& path);

// Copies loaded tensor values into an existing parameter store; every store
// parameter must be present with a matching shape.
void assign_params(ParamStore& params, const std::map<std::string, Tensor>& tensors);

// FNV-1a over the raw bytes of all parameters whose name starts with
// `prefix`, walked in name order.
std::uint64_t digest_params(const std::map<std::string, Var>& named_params,
                            const std::string& prefix = "");

}  // namespace salign::nn
