// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/core/digest.hpp"

#include <cstdio>

namespace salign {

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(const void* data, std::size_t size_bytes, std::uint64_t seed) {
    return fnv1a64(std::span<const std::byte>(static_cast<const std::byte*>(data), size_bytes),
                   seed);
}

std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return std::string(buf);
}

}  // namespace salign
