#pragma once

#include <cstdint>
#include <random>

namespace glda {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Every random stream in the library is derived from one user seed plus a
// stream id, so chains, restarts and generated subjects never share state:
//   glda chain c       -> 0x100 + c
//   gmm restart r      -> 0x200 + r
//   synth global draws -> 0x300, outcome noise -> 0x301
//   synth subject m    -> 0x10000 + m (labels and values), 0x20000 + m (weights)
namespace stream {
inline constexpr std::uint64_t glda_chain = 0x100;
inline constexpr std::uint64_t gmm_restart = 0x200;
inline constexpr std::uint64_t synth_global = 0x300;
inline constexpr std::uint64_t synth_outcome = 0x301;
inline constexpr std::uint64_t synth_subject = 0x10000;
inline constexpr std::uint64_t synth_weights = 0x20000;
} // namespace stream

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x5851F42D4C957F2DULL));
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(derive_seed(seed, stream_id));
}

} // namespace glda
