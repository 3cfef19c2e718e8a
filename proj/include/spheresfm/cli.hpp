#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spheresfm {

// Runs one spheresfm command. args excludes the program name. Returns the
// process exit status: 0 on success, 1 on a module error (reported on err as
// "error: <Category>: <message>"), 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spheresfm
