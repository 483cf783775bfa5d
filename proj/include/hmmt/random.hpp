#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace hmmt {

using Rng = std::mt19937_64;

/// Seed for an independent stream identified by (seed, stream...).
inline std::uint64_t
derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {})
{
  std::vector<std::uint32_t> words{ static_cast<std::uint32_t>(seed),
                                    static_cast<std::uint32_t>(seed >> 32) };
  for (std::uint64_t s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline Rng
make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {})
{
  return Rng(derive_seed(seed, stream));
}

} // namespace hmmt
