#pragma once

/**
 * @file rng.hpp
 * @brief Counter-based stream splitting.
 *
 * Every random stream is identified by a tuple of integers (master seed,
 * path id, purpose, ...). The tuple is hashed with the SplitMix64 finalizer
 * into the seed of a dedicated std::mt19937_64, so stream i is the same no
 * matter which thread draws it or in which order.
 */

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hedgegame {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (std::uint64_t id : ids) h = splitmix64(h ^ splitmix64(id));
    return h;
}

using Engine = std::mt19937_64;

inline Engine make_stream(std::initializer_list<std::uint64_t> ids) {
    return Engine(stream_seed(ids));
}

// Stream purposes.
enum : std::uint64_t {
    kStreamBrownian = 1,
    kStreamAdversary = 2,
    kStreamDualForward = 3,
    kStreamDualSegment = 4,
    kStreamBootstrap = 5,
    kStreamValidation = 6,
};

}  // namespace hedgegame
