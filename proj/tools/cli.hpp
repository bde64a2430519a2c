#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace memefuse {

// Parses and executes one command-line invocation (without the program
// name). Streams replace stdout/stderr so tests can run commands in
// process. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical abort.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace memefuse
