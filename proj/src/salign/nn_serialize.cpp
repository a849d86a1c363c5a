// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/nn/serialize.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "salign/core/digest.hpp"
#include "salign/core/errors.hpp"

namespace salign::nn {

namespace {
constexpr char kMagic[8] = {'S', 'A', 'L', 'N', 'C', 'K', 'P', 'T'};
}

void save_container(const std::filesystem::path& path, const nlohmann::json& header,
                    const std::map<std::string, Var>& named_params) {
    nlohmann::json full = header;
    nlohmann::json tensor_list = nlohmann::json::array();
    for (const auto& [name, var] : named_params) {
        tensor_list.push_back({{"name", name}, {"shape", var->value.shape()}});
    }
    full["tensors"] = tensor_list;
    const std::string header_str = full.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("save_container: cannot open " + path.string());
    out.write(kMagic, 8);
    const std::uint32_t version = kContainerVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, var] : named_params) {
        out.write(reinterpret_cast<const char*>(var->value.data()),
                  static_cast<std::streamsize>(var->value.size() * sizeof(float)));
    }
    if (!out) throw FormatError("save_container: short write to " + path.string());
}

LoadedContainer load_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_container: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw FormatError("load_container: bad magic in " + path.string());
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kContainerVersion) {
        throw FormatError("load_container: unsupported container version " +
                          std::to_string(version));
    }
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw FormatError("load_container: truncated header in " + path.string());

    LoadedContainer loaded;
    try {
        loaded.header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("load_container: corrupt header: ") + e.what());
    }

    for (const auto& entry : loaded.header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw FormatError("load_container: truncated tensor " + name);
        loaded.tensors.emplace(name, std::move(t));
    }
    return loaded;
}

void assign_params(ParamStore& params, const std::map<std::string, Tensor>& tensors) {
    for (const auto& [name, var] : params.named()) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw FormatError("assign_params: checkpoint is missing tensor " + name);
        }
        if (!(it->second.shape() == var->value.shape())) {
            throw FormatError("assign_params: shape mismatch for tensor " + name);
        }
        var->value = it->second;
    }
}

std::uint64_t digest_params(const std::map<std::string, Var>& named_params,
                            const std::string& prefix) {
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    for (const auto& [name, var] : named_params) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        digest = fnv1a64(name.data(), name.size(), digest);
        digest = fnv1a64(var->value.data(), static_cast<std::size_t>(var->value.size()) * sizeof(float),
                         digest);
    }
    return digest;
}

}  // namespace salign::nn
