#include "ccpt/rng.hpp"

#include <sstream>

#include "ccpt/error.hpp"

namespace ccpt {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t));
  return h;
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::vector<std::uint64_t> rng_state_words(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  std::istringstream is(os.str());
  std::vector<std::uint64_t> words;
  std::uint64_t w;
  while (is >> w) words.push_back(w);
  return words;
}

Rng rng_from_words(const std::vector<std::uint64_t>& words) {
  std::ostringstream os;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) os << ' ';
    os << words[i];
  }
  std::istringstream is(os.str());
  Rng rng;
  is >> rng;
  if (is.fail()) throw Error(ErrorKind::Corruption, "invalid random engine state");
  return rng;
}

}  // namespace ccpt
