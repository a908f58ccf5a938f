#ifndef DPIIL_RANDOM_H_
#define DPIIL_RANDOM_H_

#include <cstdint>
#include <random>

namespace dpiil {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream) {
  return Mix64(Mix64(base) ^ Mix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return DeriveSeed(DeriveSeed(base, a), b);
}

}  // namespace dpiil

#endif  // DPIIL_RANDOM_H_
