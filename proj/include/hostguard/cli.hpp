#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hostguard/config.hpp"

namespace hostguard {

/// Exit codes shared by every command.
inline constexpr int exit_clean = 0;
inline constexpr int exit_findings = 1;
inline constexpr int exit_error = 2;

/// Runs `hostguard <args...>` (args exclude the program name). Reads the
/// baseline confirmation from `in`; `env` supplies HOSTGUARD_CONFIG and
/// per-key overrides.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in,
            const env_map& env);

/// HOSTGUARD_* variables of the current process.
env_map process_env();

}  // namespace hostguard
