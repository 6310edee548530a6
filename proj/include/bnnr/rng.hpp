#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "bnnr/tensor.hpp"

namespace bnnr {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = mix_seed(base);
  for (std::uint64_t p : parts) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Tensor randn(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(shape);
  for (double& v : out.data()) v = normal(rng);
  return out;
}

inline Tensor rand_uniform(const Shape& shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> uniform(lo, hi);
  Tensor out(shape);
  for (double& v : out.data()) v = uniform(rng);
  return out;
}

// Entries drawn uniformly from {-1, +1}.
inline Tensor rademacher(const Shape& shape, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Tensor out(shape);
  for (double& v : out.data()) v = coin(rng) ? 1.0 : -1.0;
  return out;
}

}  // namespace bnnr
