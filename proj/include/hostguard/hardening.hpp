#pragma once

#include <set>
#include <string>
#include <vector>

#include "hostguard/signatures.hpp"
#include "hostguard/util.hpp"

namespace hostguard::hardening {

using signatures::severity;

struct policy {
  /// Function names for disable_functions; `allow_url_include` here means
  /// the directive must be explicitly Off.
  std::vector<std::string> banned_functions{"shell_exec", "popen", "proc_open", "exec",
                                            "passthru",   "system", "allow_url_include"};
  std::int64_t max_session_lifetime = 1440;  // seconds
  unsigned max_file_mode = 0644;
  unsigned max_dir_mode = 0755;
  std::set<std::string> forbidden_usernames{"admin", "administrator", "root"};
  double min_password_entropy_bits = 50;
  fs::path weak_password_list;  // one password per line; empty: built-in list
  std::set<std::string> weak_passwords;

  /// Applies one `key = value` setting. Unknown keys return false; bad
  /// values throw errc::invalid_policy.
  bool set(std::string_view key, std::string_view value);
  /// Loads weak_password_list (if set) into weak_passwords and checks the
  /// invariants.
  void finalize();
};

/// Reads `[hardening]` (or section-less) keys from an ini document. A
/// relative weak_password_list is resolved against `base_dir`.
policy parse_policy(std::string_view text, const fs::path& base_dir = {});

enum class category { runtime_config, permissions, credentials, transport, session };
std::string_view to_string(category c);

struct finding {
  std::string finding_id;
  category cat = category::runtime_config;
  std::string subject;
  std::string observed;
  std::string expected;
  severity level = severity::medium;
  bool remediable = false;

  std::string to_json() const;
};

std::string findings_jsonl(const std::vector<finding>& fs);

std::vector<finding> audit_runtime_config(std::string_view config_doc, const policy& pol);
std::vector<finding> audit_filesystem(const fs::path& root, const policy& pol);

/// JSON lines of {"account", "password" | "hash", "realm"}.
std::vector<finding> audit_credentials(std::string_view cred_doc, const policy& pol);

/// Bits estimated as length * log2(size of the character pools used).
double password_entropy_bits(std::string_view password);

struct remediation_bundle {
  std::string runtime_overrides;  // php.ini syntax
  std::string access_rules;       // .htaccess syntax
  std::vector<std::string> manual_steps;
};

remediation_bundle emit_remediation(const std::vector<finding>& findings);

}  // namespace hostguard::hardening
