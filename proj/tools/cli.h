#ifndef DPIIL_TOOLS_CLI_H_
#define DPIIL_TOOLS_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace dpiil {

// Runs the dpiil command line with `args` (program name excluded).
// Returns 0 on success, 1 on runtime failure, 2 on bad usage.
int CliRun(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpiil

#endif  // DPIIL_TOOLS_CLI_H_
