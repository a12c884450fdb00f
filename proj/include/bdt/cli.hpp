#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace bdt::cli {

enum ExitCode : int { Ok = 0, UsageError = 1, DataFailure = 2, TransportFailure = 3 };

/// Flat `key = value` document; '#' starts a comment, values may be quoted.
std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& path);

/// Entry point of the `bdt` tool. `args[0]` is the program name. Values from
/// --config fill options not given on the command line; BDT_SEED overrides both.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bdt::cli
