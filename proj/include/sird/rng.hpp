#pragma once

#include <cstdint>
#include <random>

namespace sird {

// splitmix64: used to derive independent engine seeds from (seed, stream ids)
// so that per-draw simulation streams do not depend on loop scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_a = 0,
                                   std::uint64_t stream_b = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(stream_a + 1));
  s = splitmix64(s ^ splitmix64(stream_b + 0x9e3779b97f4a7c15ULL));
  return std::mt19937_64(s);
}

inline double draw_poisson(std::mt19937_64& gen, double mean) {
  if (mean <= 0.0) return 0.0;
  std::poisson_distribution<long long> dist(mean);
  return static_cast<double>(dist(gen));
}

}  // namespace sird
