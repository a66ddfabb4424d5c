#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hostguard/util.hpp"

namespace hostguard::integrity {

struct baseline_entry {
  std::string rel_path;
  std::uintmax_t size = 0;
  std::string digest;  // SHA-256, lowercase hex
  unsigned mode = 0;
  timestamp_ms recorded_at = 0;  // in-memory only; not part of the manifest file
};

/// The hashed list of a pristine CMS core.
///
/// File form (LF line endings, UTF-8):
///   HOSTGUARD-MANIFEST v1 <cms_name> <cms_version>
///   EXCLUDE <glob>                         (zero or more)
///   <digest> <size> <mode> <rel_path>      (sorted by rel_path)
///   SITEMAP                                (optional section)
///   <url>
///   DIGEST <sha256 of every preceding byte>
struct baseline_manifest {
  std::map<std::string, baseline_entry> entries;
  std::string cms_name = "cms";
  std::string cms_version = "0";
  std::vector<std::string> exclude_globs;
  std::optional<std::set<std::string>> sitemap_urls;
  std::string manifest_digest;

  bool contains(std::string_view rel_path) const { return entries.count(std::string(rel_path)) != 0; }
  bool is_excluded(std::string_view rel_path) const { return any_glob_match(exclude_globs, rel_path); }

  /// Everything above the DIGEST trailer.
  std::string canonical_body() const;
  /// Recomputes manifest_digest from the current contents.
  void seal();
  std::string serialize() const;
  /// Any byte-level damage raises errc::manifest_tampered.
  static baseline_manifest parse(std::string_view text);
};

struct baseline_options {
  std::string cms_name = "cms";
  std::string cms_version = "0";
  std::vector<std::string> exclude_globs;
  std::optional<std::string> sitemap_document;
};

/// `root` must hold trusted pristine content; that is the caller's call.
/// An unreadable file aborts with errc::unreadable_file.
baseline_manifest build_baseline(const fs::path& root, const baseline_options& opts = {});

void save_manifest(const fs::path& path, const baseline_manifest& m);
baseline_manifest load_manifest(const fs::path& path);

struct permission_drift {
  std::string rel_path;
  unsigned expected_mode = 0;
  unsigned found_mode = 0;
  bool operator==(const permission_drift&) const = default;
};

struct integrity_report {
  std::vector<std::string> modified;
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::vector<std::string> unknown_unhashed;
  std::vector<permission_drift> permissions_drift;

  bool clean() const {
    return modified.empty() && added.empty() && removed.empty() && permissions_drift.empty();
  }
  std::string to_json() const;
};

/// Classifies every live file against the baseline. Unreadable baselined
/// files count as modified. All lists come back sorted.
integrity_report verify_tree(const fs::path& root, const baseline_manifest& manifest);

// ---------------------------------------------------------------------------
// quarantine
// ---------------------------------------------------------------------------
enum class quarantine_reason { integrity_mismatch, signature_hit, manual };
enum class quarantine_status { held, restored, purged };

std::string_view to_string(quarantine_reason r);
std::string_view to_string(quarantine_status s);

struct quarantine_entry {
  std::uint64_t entry_id = 0;
  std::string original_path;  // absolute
  std::string stored_blob;    // relative to the store, blobs/<digest>
  quarantine_reason reason = quarantine_reason::manual;
  std::string detail;         // always carries sha256=<digest>
  timestamp_ms created_at = 0;
  quarantine_status status = quarantine_status::held;
  std::string digest;
  unsigned mode = 0;
  std::uintmax_t size = 0;
};

/// Content-addressed evidence store with an append-only JSON-lines ledger.
/// Mutations take an exclusive advisory lock on the store, so there is at
/// most one writer at a time; readers may run concurrently.
class quarantine_store {
 public:
  explicit quarantine_store(fs::path dir, std::function<timestamp_ms()> clock = now_ms);

  /// Moves the file into the store and leaves a mode-000 placeholder
  /// naming the entry. The ledger append is the commit point; a crash after
  /// it is rolled forward the next time the store is opened.
  quarantine_entry quarantine_file(const fs::path& path, quarantine_reason reason, std::string detail = {});
  /// Copies the blob back with its original mode; the blob is retained.
  fs::path restore_file(std::uint64_t entry_id);
  /// Confirms the file as malicious: placeholder and unreferenced blob go.
  quarantine_entry purge(std::uint64_t entry_id);

  std::vector<quarantine_entry> entries() const;
  std::optional<quarantine_entry> find(std::uint64_t entry_id) const;
  const fs::path& dir() const { return dir_; }
  fs::path ledger_path() const { return dir_ / "ledger.jsonl"; }

  static std::string placeholder_text(std::uint64_t entry_id, std::string_view digest);

  /// Test hook: invoked at named steps of quarantine_file ("blob_stored",
  /// "ledger_committed"). Throwing from it simulates a crash there.
  std::function<void(std::string_view)> fault_hook;

 private:
  std::map<std::uint64_t, quarantine_entry> load_locked() const;
  void recover();

  fs::path dir_;
  std::function<timestamp_ms()> clock_;
};

}  // namespace hostguard::integrity
