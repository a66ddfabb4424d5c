#pragma once

#include <map>
#include <string>

#include "hostguard/gateway.hpp"
#include "hostguard/hardening.hpp"
#include "hostguard/monitor.hpp"
#include "hostguard/util.hpp"

namespace hostguard {

/// Operator configuration: one ini file, overridable per key through
/// HOSTGUARD_<SECTION>_<KEY> environment variables.
///
///   [paths]     web_root manifest signatures quarantine_dir geo_table
///               reputation_fixture state_dir verdict_log block_log
///               alerts_log dead_letter event_log php_ini credentials sitemap
///   [hardening] see hardening::policy::set
///   [gateway]   see gateway::policy::set, plus mode listen upstream dns_server
///   [monitor]   window_s group_by tree sitemap_url sitemap_threshold
///               smtp_spool mail_from mail_to max_retries backoff_ms and the
///               builtin tree thresholds
///
/// Relative paths resolve against the config file's directory. Unknown
/// sections and keys are errors. Log and store paths left empty default to
/// files under state_dir.
struct config {
  fs::path source;

  fs::path web_root;
  fs::path manifest_path;
  fs::path signature_path;
  fs::path quarantine_dir;
  fs::path geo_table_path;
  fs::path reputation_fixture;
  fs::path state_dir;
  fs::path verdict_log;
  fs::path block_log;
  fs::path alerts_log;
  fs::path dead_letter;
  fs::path event_log;
  fs::path php_ini;
  fs::path credentials;
  fs::path sitemap;
  fs::path blacklist_store;

  hardening::policy hardening;

  gateway::policy gateway;
  gateway::mode mode = gateway::mode::production;
  std::string listen = "127.0.0.1:8080";
  std::string upstream;
  std::string dns_server;

  std::int64_t window_s = 60;
  monitor::group_by grouping = monitor::group_by::script;
  monitor::builtin_thresholds thresholds;
  fs::path tree_path;
  std::string sitemap_url;
  std::size_t sitemap_threshold = 10;
  fs::path smtp_spool;
  std::string mail_from = "hostguard@localhost";
  std::string mail_to = "root@localhost";
  unsigned max_retries = 3;
  std::int64_t backoff_ms = 200;
};

using env_map = std::map<std::string, std::string>;

/// Throws errc::config_error naming the offending key (and line).
config parse_config(std::string_view text, const fs::path& base_dir, const env_map& env = {});
config load_config(const fs::path& path, const env_map& env = {});
/// Defaults plus environment overrides, for runs without a config file.
config default_config(const env_map& env = {});

}  // namespace hostguard
