#pragma once

#include <string>
#include <vector>

namespace semdec::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kNumericalAbort = 3,
};

/// Entry point for `semdec {synth|train|eval|analyze}`. Errors are reported
/// as one `error kind=<kind> where=<field> msg="..."` line on stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace semdec::cli
