#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kspace {

/// Runs the `kspace` command line. args[0] is the program name.
/// Exit codes: 0 ok, 2 usage/parameter, 3 validation, 4 computation, 5 I/O.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a comma-separated layer list such as "0,1,14".
std::vector<std::uint32_t> parse_layer_list(const std::string& text);

}  // namespace kspace
