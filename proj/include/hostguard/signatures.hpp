#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hostguard/regex.hpp"
#include "hostguard/util.hpp"

namespace hostguard::signatures {

enum class threat_class { webshell, miner, phishing_redirect, injector, spam_mailer, generic_obfuscation };
enum class severity { low, medium, high, critical };

std::string_view to_string(threat_class c);
std::string_view to_string(severity s);
std::optional<threat_class> parse_threat_class(std::string_view s);
std::optional<severity> parse_severity(std::string_view s);

struct signature {
  std::string id;
  threat_class klass = threat_class::webshell;
  regex pattern;
  severity level = severity::medium;
  std::string description;
  /// Only the first N bytes of a target are examined; nullopt = unbounded.
  std::optional<std::size_t> max_target_bytes;
  bool binary_ok = false;
};

/// Immutable after load; safe to share across scanning threads.
struct signature_set {
  std::vector<signature> signatures;
  std::string version;
  fs::path loaded_from;
  std::uint64_t checksum = 0;  // FNV-1a 64 over the raw file bytes

  bool has_binary_signatures() const;
  const signature* find(std::string_view id) const;
};

/// Parses the tab-separated signature format:
///   id<TAB>threat_class<TAB>severity<TAB>flags<TAB>pattern<TAB>description
/// `#` starts a comment line; `#! version <text>` names the set version.
/// flags: comma list of ci, cs, binary_ok, max=<bytes>; `-` or empty for
/// none. Patterns are case-insensitive unless `cs` is given.
signature_set parse_signatures(std::string_view text, const fs::path& origin = {});
signature_set load_signatures(const fs::path& path);

inline constexpr std::size_t excerpt_limit = 160;

struct signature_hit {
  std::string signature_id;
  std::string file_path;  // or an origin tag for request payloads
  std::size_t byte_offset = 0;
  std::string matched_excerpt;
  threat_class klass = threat_class::webshell;
  severity level = severity::medium;
};

/// Every non-overlapping leftmost hit of each signature, ordered by
/// signature then offset. `binary` restricts the pass to binary_ok
/// signatures.
std::vector<signature_hit> scan_content(bytes_view content, const signature_set& set,
                                        std::string_view origin, bool binary = false);
inline std::vector<signature_hit> scan_content(std::string_view content, const signature_set& set,
                                               std::string_view origin) {
  return scan_content(as_bytes(content), set, origin);
}

/// NUL byte in the first 4 KiB.
bool looks_binary(bytes_view content);

struct scan_limits {
  std::uintmax_t max_file_bytes = 5 * 1024 * 1024;
  bool follow_symlinks = false;
  std::vector<std::string> include_globs;  // empty: everything
  std::vector<std::string> exclude_globs;
  unsigned workers = 0;                    // 0: hardware concurrency
};

struct skipped_file {
  std::string path;
  std::string reason;  // too_large, unreadable, binary_excluded, symlink_not_followed
};

struct scan_report {
  std::string root;
  std::size_t files_scanned = 0;
  std::vector<skipped_file> files_skipped;
  std::vector<signature_hit> hits;  // sorted by path, offset, signature order
  std::int64_t duration_ms = 0;
  timestamp_ms started_at = 0;

  /// One JSON hit per line plus a trailing summary record.
  std::string to_jsonl() const;
  /// Same as to_jsonl without timing fields; identical for identical scans.
  std::string to_jsonl_stable() const;
};

scan_report scan_tree(const fs::path& root, const signature_set& set, const scan_limits& limits = {});

/// Scans a known list of files (relative to root), e.g. the integrity
/// checker's suspects. Missing files are recorded as unreadable.
scan_report scan_files(const fs::path& root, const std::vector<std::string>& rel_paths,
                       const signature_set& set, const scan_limits& limits = {});

}  // namespace hostguard::signatures
