#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hostguard/error.hpp"

namespace hostguard {

namespace fs = std::filesystem;

using bytes_view = std::span<const unsigned char>;

inline bytes_view as_bytes(std::string_view s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

// ---------------------------------------------------------------------------
// strings
// ---------------------------------------------------------------------------
std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
/// Split on `sep`, trim each piece and drop empty pieces.
std::vector<std::string> split_list(std::string_view s, char sep = ',');
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool parse_bool(std::string_view s, bool& out);

/// Percent-decoding; `plus_as_space` applies form-encoding rules.
std::string percent_decode(std::string_view s, bool plus_as_space = false);
std::string html_escape(std::string_view s);

std::string to_hex(bytes_view data);
std::string base64_encode(bytes_view data);
std::optional<std::string> base64_decode(std::string_view s);

// ---------------------------------------------------------------------------
// hashing
// ---------------------------------------------------------------------------
using sha256_digest = std::array<unsigned char, 32>;
sha256_digest sha256(bytes_view data);
std::string sha256_hex(bytes_view data);
std::string sha256_hex(std::string_view data);
/// Streams the file; throws error(unreadable_file) on I/O failure.
std::string sha256_file_hex(const fs::path& p);

inline constexpr std::uint64_t fnv1a_offset_basis = 14695981039346656037ull;
inline constexpr std::uint64_t fnv1a_prime = 1099511628211ull;

constexpr std::uint64_t fnv1a64(bytes_view data, std::uint64_t seed = fnv1a_offset_basis) {
  std::uint64_t h = seed;
  for (unsigned char b : data) {
    h ^= b;
    h *= fnv1a_prime;
  }
  return h;
}

// ---------------------------------------------------------------------------
// time
// ---------------------------------------------------------------------------
/// Milliseconds since the Unix epoch, UTC.
using timestamp_ms = std::int64_t;

timestamp_ms now_ms();
/// `2026-01-02T03:04:05.678Z`
std::string format_utc(timestamp_ms t);
/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff]Z`.
std::optional<timestamp_ms> parse_utc(std::string_view s);
/// `90s`, `15m`, `1h`, `2d` → milliseconds.
std::optional<std::int64_t> parse_duration_ms(std::string_view s);

// ---------------------------------------------------------------------------
// paths and files
// ---------------------------------------------------------------------------
/// Glob over `/`-separated relative paths: `*` and `?` stay within a
/// segment, `**` spans segments (and `dir/**` matches everything below dir).
bool glob_match(std::string_view pattern, std::string_view path);
bool any_glob_match(const std::vector<std::string>& patterns, std::string_view path);

/// Normalized relative form: forward slashes, no `.`/`..`/empty components.
/// Returns nullopt if the path escapes its root.
std::optional<std::string> normalize_rel_path(std::string_view p);

enum class entry_kind { file, directory, symlink, other, unreadable };

struct tree_entry {
  std::string rel;  // `/`-separated, relative to the walk root
  fs::path abs;
  entry_kind kind = entry_kind::file;
};

/// Depth-first walk sorted by relative path. Symlinks are reported as such
/// unless `follow_symlinks`, in which case they are resolved (cycles are cut).
/// Directories appear in the output only when `include_dirs` is set.
/// Unreadable directories are reported, never thrown.
std::vector<tree_entry> walk_tree(const fs::path& root, bool follow_symlinks = false,
                                  bool include_dirs = false);

std::string read_file(const fs::path& p);
/// Write via temp file + rename so readers see old or new content only.
void write_file_atomic(const fs::path& p, std::string_view content);
void append_line_durable(const fs::path& p, std::string_view line);

std::string mode_to_octal(unsigned mode);
std::optional<unsigned> parse_octal_mode(std::string_view s);

// ---------------------------------------------------------------------------
// ini-style documents
// ---------------------------------------------------------------------------
struct ini_entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

/// `[section]` headers, `key = value` lines, `;`/`#` comments, optional
/// double quotes around values. Malformed lines raise `parse_error` with the
/// line number in the message.
/// A bare `key` line without `=` is an error.
std::vector<ini_entry> parse_ini(std::string_view text, errc parse_error);

}  // namespace hostguard
