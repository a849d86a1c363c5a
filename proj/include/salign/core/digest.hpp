// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace salign {

// FNV-1a 64-bit over raw bytes. Used for frozen-weight checks and run
// manifests, not for security.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint64_t fnv1a64(const void* data, std::size_t size_bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string digest_hex(std::uint64_t digest);

}  // namespace salign
