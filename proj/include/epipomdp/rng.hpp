#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace epipomdp {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed and a fixed label, so
// that e.g. the evaluation stream does not shift when dataset size changes.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

inline Rng make_rng(std::uint64_t master, std::string_view label) {
  return Rng(derive_seed(master, label));
}

// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
  return std::generate_canonical<double, 53>(rng);
}

// Draws an index from an (unnormalized, non-negative) weight vector.
std::size_t sample_categorical(std::span<const double> weights, Rng& rng);

inline std::size_t sample_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace epipomdp
