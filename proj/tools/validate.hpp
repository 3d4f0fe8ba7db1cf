#pragma once

#include <cstdint>
#include <ostream>

namespace hhk::tools {

/// Quick invariant checks on random instances. Prints one line per check;
/// returns the number of failures.
int run_validation(std::uint64_t seed, std::ostream& out);

}  // namespace hhk::tools
