#pragma once

#include <cstdint>
#include <string_view>

namespace prnmt {

// Named sub-streams of one experiment seed. The same (seed, stream, index)
// always yields the same value; different streams are decorrelated.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

}  // namespace prnmt
