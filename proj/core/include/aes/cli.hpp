#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aes {

/// Runs one CLI invocation (subcommands: tok, train, predict, ensemble, eval,
/// kfold, params, agree-human). Returns the process exit code: 0 ok, 2 usage,
/// 3 format, 4 data, 5 undefined statistic, 1 internal.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::istream& in);

}  // namespace aes
