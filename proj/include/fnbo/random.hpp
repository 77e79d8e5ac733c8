#pragma once

#include <boost/random/mersenne_twister.hpp>

#include <cstdint>
#include <initializer_list>

namespace fnbo {

// boost distributions are used throughout because their output is fixed by
// the boost version, unlike the std:: ones which vary across standard libraries.
using Rng = boost::random::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed from a parent seed and a list of tags.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

/// Standard normal quantile.
double normal_quantile(double p);
double normal_cdf(double z);
double normal_pdf(double z);

}  // namespace fnbo
