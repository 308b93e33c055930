#pragma once

#include <cstdint>
#include <random>

namespace satae {

/// Independent random streams derived from one user seed. Each consumer gets
/// its own engine so that, e.g., changing the shuffle order never perturbs
/// the initial weights.
enum class Stream : std::uint32_t {
    init = 1,
    shuffle = 2,
    data = 3,
    patches = 4,
    noise = 5,
};

inline std::mt19937_64 make_engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace satae
