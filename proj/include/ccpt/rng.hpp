#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ccpt {

using Rng = std::mt19937_64;

/// Mixes a base seed with stream tags (splitmix64 finalizer) so independent
/// streams never share a seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Distributions are constructed per call so the engine holds all state.
double uniform01(Rng& rng);
double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Engine state as the words written by operator<<.
std::vector<std::uint64_t> rng_state_words(const Rng& rng);
Rng rng_from_words(const std::vector<std::uint64_t>& words);

}  // namespace ccpt
