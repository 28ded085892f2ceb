#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace srim {

using Rng = std::mt19937_64;

/// Derives a child seed from a parent seed and a purpose tag. Children of the
/// same parent with different tags are decorrelated, and adding a new tag
/// never shifts the seeds of existing ones.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace srim
