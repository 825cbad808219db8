// cli.h
//
// The shadowlab command line. `run_cli` is the whole tool minus process
// setup, so tests can drive it with captured streams.
#ifndef SHADOWLAB_TOOLS_CLI_H_
#define SHADOWLAB_TOOLS_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <string>

namespace shadowlab::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // invariant violations
  kUsage = 2,    // bad arguments, unreadable or invalid input
};

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

// Writes to a temporary file next to `path`, then renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);

}  // namespace shadowlab::cli

#endif  // SHADOWLAB_TOOLS_CLI_H_
