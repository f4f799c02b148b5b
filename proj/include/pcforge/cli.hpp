#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace pcforge::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Flat `key = value` lines; '#' starts a comment. Throws InvalidArgument
// on malformed lines or duplicate keys.
std::map<std::string, std::string> parse_config(const std::string& text);

// args[0] is the program name. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcforge::cli
