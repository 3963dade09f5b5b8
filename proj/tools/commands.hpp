#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lempart::cli {

// Runs one command line (without the program name). Returns the process exit
// code: 0 ok, 2 input error, 3 resource cap, 4 solver failure. Errors are
// written to `err` as a JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lempart::cli
