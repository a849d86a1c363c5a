// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace salign {

// Deterministic counter-free PRNG (splitmix64 core) with named substreams.
// Every stochastic component derives its own stream via fork(), so results
// are reproducible regardless of call interleaving or thread count.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : origin_(mix(seed ^ kStreamSalt)), state_(origin_) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    // Standard normal via Box-Muller (pairs cached).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent child stream; a pure function of (parent identity, word) --
    // unaffected by how many values the parent has drawn.
    Rng fork(std::uint64_t word) const;
    Rng fork(std::uint64_t a, std::uint64_t b) const { return fork(a).fork(b); }
    Rng fork(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        return fork(a).fork(b).fork(c);
    }

  private:
    static constexpr std::uint64_t kStreamSalt = 0x9e3779b97f4a7c15ULL;
    static std::uint64_t mix(std::uint64_t z);

    std::uint64_t origin_;
    std::uint64_t state_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace salign
