#pragma once

#include <exception>
#include <ostream>
#include <string>

#include "lemon/pdelab/grid.hpp"

namespace lemon::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kDataError = 3,
    kNumericFailure = 4,
    kProtocolViolation = 5,
};

/// Exit code for a library exception (ConfigError -> usage, DataError and
/// container problems -> data, NumericError/SolverError -> numeric,
/// ProtocolError -> protocol, anything else -> internal).
int exit_code_for(const std::exception& e);

/// "nx=128,ntin=8,ntout=16[,T=1,L=1,split=0.4]" applied on top of `base`.
/// ConfigError on unknown keys or malformed values.
pdelab::Grid parse_grid(const std::string& text, pdelab::Grid base = {});

/// Entry point of the `lemon` tool. Failures print one line to `err`:
/// error code=<n> type=<name> message=<JSON string>.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lemon::cli
