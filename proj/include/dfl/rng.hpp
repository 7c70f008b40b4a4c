#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dfl {

using Rng = std::mt19937_64;

// Derives an independent substream seed from a master seed and a fixed label
// ("data", "init", "sfge", ...). Policies that share a master seed therefore
// see exactly the same data while owning separate sampling streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

inline Rng make_rng(std::uint64_t master, std::string_view label) {
  return Rng(derive_seed(master, label));
}

}  // namespace dfl
