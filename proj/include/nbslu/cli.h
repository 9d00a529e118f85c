#ifndef NBSLU_CLI_H_
#define NBSLU_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace nbslu {

// Parses the argument vector (without the program name), dispatches to a
// subcommand and returns the process exit code. Failures print one
// diagnostic line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nbslu

#endif  // NBSLU_CLI_H_
