#pragma once

#include <cstdint>
#include <random>

namespace edgecache {

using Rng = std::mt19937_64;

// Independent sub-streams of one experiment seed.
enum class SeedStream : std::uint32_t {
  catalog = 1,
  workload = 2,
  agent = 3,
  evaluation = 4,
};

inline std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream,
                                 std::uint32_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), salt};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t seed, SeedStream stream, std::uint32_t salt = 0) {
  return Rng{derive_seed(seed, stream, salt)};
}

// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>{0.0, 1.0}(rng);
}

}  // namespace edgecache
