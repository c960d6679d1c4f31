#pragma once

#include <cstdint>
#include <random>

namespace fastkci {

using RngEngine = std::mt19937_64;

/// SplitMix64 finalizer; bijective mix of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Child seed for a named stream. Nested derivations never collide with
/// sequential reseeding, so streams can be handed to parallel workers in
/// any order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(seed ^ mix64(stream));
}

template <class... Ids>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t first,
                                    Ids... rest) noexcept {
  return derive_seed(derive_seed(seed, first), static_cast<std::uint64_t>(rest)...);
}

inline RngEngine make_engine(std::uint64_t seed) { return RngEngine(mix64(seed)); }

// Purpose tags for stream derivation. The null-draw stream of the whole-sample
// KCI test is block (j=0, v=0); FastKCI blocks extend the same scheme, which is
// what makes the V=1, J=1 case coincide with plain KCI draw for draw.
namespace stream_tag {
inline constexpr std::uint64_t null_draws = 0x6e756c6c64726177ull;
inline constexpr std::uint64_t partition = 0x706172746974696full;
inline constexpr std::uint64_t dataset = 0x6461746173657430ull;
inline constexpr std::uint64_t test_config = 0x7465737463666730ull;
inline constexpr std::uint64_t ci_query = 0x6369717565727930ull;
inline constexpr std::uint64_t subsample = 0x73756273616d706cull;
}  // namespace stream_tag

}  // namespace fastkci
