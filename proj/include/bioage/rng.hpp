#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bioage::rng {

// Stream tags for seed derivation. Each subsystem draws from its own derived
// stream so that adding draws in one place does not shift another.
inline constexpr std::uint64_t kPatientStream = 0x70617469ULL;  // synth per-patient
inline constexpr std::uint64_t kBalanceStream = 0x62616c61ULL;  // age balancing per-bin
inline constexpr std::uint64_t kSplitStream = 0x73706c69ULL;    // cleaning per-iteration split
inline constexpr std::uint64_t kTrainStream = 0x74726169ULL;    // cleaning per-iteration training
inline constexpr std::uint64_t kFinalStream = 0x66696e61ULL;    // cleaning final retrain
inline constexpr std::uint64_t kInitStream = 0x696e6974ULL;     // regressor weight init
inline constexpr std::uint64_t kOrderStream = 0x6f726465ULL;    // regressor batch order

// splitmix64 finalizer.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent seed from (master, stream, index).
inline std::uint64_t derive(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  return mix(mix(master ^ mix(stream)) + index);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Distributions are hand-rolled: the mt19937_64 output sequence is pinned by
// the standard, but the standard distributions are not, and reproducibility
// across standard libraries is part of the contract.

// Uniform in [0, 1), 53-bit resolution.
inline double uniform01(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Box-Muller without caching; consumes exactly two engine draws per call.
inline double normal(Engine& g, double mean, double sd) {
  const double u1 = 1.0 - uniform01(g);  // (0, 1]
  const double u2 = uniform01(g);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * radius * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Uniform integer in [0, n). Modulo bias is irrelevant at the n used here.
inline std::uint64_t below(Engine& g, std::uint64_t n) {
  return g() % n;
}

// Fisher-Yates; consumes size()-1 draws.
template <class T>
void shuffle(std::vector<T>& v, Engine& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace bioage::rng
