#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace clseg {

/// Independent, reproducible stream derived from a base seed and a stream path
/// (e.g. {domain, purpose}). Same inputs always give the same engine state.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
    std::vector<std::uint32_t> words;
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto s : stream) {
        words.push_back(static_cast<std::uint32_t>(s));
        words.push_back(static_cast<std::uint32_t>(s >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

} // namespace clseg
