#pragma once

namespace timedistill::cli {

/// Runs the command line tool; returns the process exit code
/// (0 ok, 1 usage, 2 data, 3 contract violation).
int run(int argc, char** argv);

}  // namespace timedistill::cli
