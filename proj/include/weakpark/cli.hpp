#ifndef WEAKPARK_CLI_HPP_
#define WEAKPARK_CLI_HPP_

#include <ostream>

namespace weakpark {

/// Entry point of the `weakpark` tool. Exit codes: 0 success, 2 validation
/// error (bad flags, missing inputs), 1 internal error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace weakpark

#endif  // WEAKPARK_CLI_HPP_
