#pragma once

#include <iosfwd>

namespace nbs {

/// Exit codes: 0 success, 2 invalid input or missing artifact, 3 non-finite
/// numerics, 1 anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nbs
