#pragma once

#include <iosfwd>

#include "config.hpp"

namespace fsk {

// Executes one validated config against the library and reports through
// `out` (results) and stderr (timing, and detail when FRACSTEK_VERBOSE
// is set).  Returns the process exit status: 0 success, 1 solver or
// check failure.  Config-shaped problems (missing s, bad parameter
// combinations) surface as exceptions for the shell to map to status 2.
int run_command(const RunConfig& cfg, std::ostream& out);

}  // namespace fsk
