#include "hostguard/integrity.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hostguard/error.hpp"
#include "hostguard/sitemap.hpp"

namespace hostguard::integrity {

using json = nlohmann::json;

namespace {

constexpr std::string_view header_tag = "HOSTGUARD-MANIFEST v1 ";
constexpr std::string_view digest_tag = "DIGEST ";

bool is_hex64(std::string_view s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

bool has_control(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c < 0x20 || c == 0x7f; });
}

bool is_token(std::string_view s) {
  return !s.empty() && !has_control(s) && s.find(' ') == std::string_view::npos;
}

unsigned file_mode(const fs::path& p) {
  struct stat sb{};
  if (::lstat(p.c_str(), &sb) != 0) return 0;
  return static_cast<unsigned>(sb.st_mode) & 07777u;
}

}  // namespace

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------
std::string baseline_manifest::canonical_body() const {
  std::string out;
  out += header_tag;
  out += cms_name + " " + cms_version + "\n";
  for (const auto& g : exclude_globs) out += "EXCLUDE " + g + "\n";
  for (const auto& [rel, e] : entries) {
    out += e.digest + " " + std::to_string(e.size) + " " + mode_to_octal(e.mode) + " " + rel + "\n";
  }
  if (sitemap_urls) {
    out += "SITEMAP\n";
    for (const auto& u : *sitemap_urls) out += u + "\n";
  }
  return out;
}

void baseline_manifest::seal() { manifest_digest = sha256_hex(canonical_body()); }

std::string baseline_manifest::serialize() const {
  auto body = canonical_body();
  return body + std::string(digest_tag) + sha256_hex(body) + "\n";
}

baseline_manifest baseline_manifest::parse(std::string_view text) {
  auto tampered = [](const std::string& why) { return error(errc::manifest_tampered, why); };
  // Trailer: exactly "DIGEST <64 hex>\n" at the very end.
  constexpr std::size_t trailer_len = 7 + 64 + 1;
  if (text.size() < trailer_len || text.back() != '\n') throw tampered("missing digest trailer");
  auto trailer = text.substr(text.size() - trailer_len);
  if (trailer.substr(0, digest_tag.size()) != digest_tag) throw tampered("missing digest trailer");
  auto digest = trailer.substr(digest_tag.size(), 64);
  if (!is_hex64(digest)) throw tampered("malformed digest");
  auto body = text.substr(0, text.size() - trailer_len);
  if (!body.empty() && body.back() != '\n') throw tampered("missing digest trailer");
  if (sha256_hex(body) != digest) throw tampered("digest mismatch");

  baseline_manifest m;
  m.manifest_digest = std::string(digest);
  auto lines = split(body, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0].rfind(header_tag, 0) != 0) throw tampered("bad header");
  auto head = split(std::string_view(lines[0]).substr(header_tag.size()), ' ');
  if (head.size() != 2 || !is_token(head[0]) || !is_token(head[1])) throw tampered("bad header");
  m.cms_name = head[0];
  m.cms_version = head[1];
  bool in_sitemap = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (in_sitemap) {
      if (!is_absolute_url(line)) throw tampered("bad sitemap url on line " + std::to_string(i + 1));
      m.sitemap_urls->insert(std::string(line));
      continue;
    }
    if (line == "SITEMAP") {
      in_sitemap = true;
      m.sitemap_urls.emplace();
      continue;
    }
    if (line.rfind("EXCLUDE ", 0) == 0) {
      m.exclude_globs.emplace_back(line.substr(8));
      continue;
    }
    // digest size mode rel_path
    auto s1 = line.find(' ');
    auto s2 = s1 == std::string_view::npos ? s1 : line.find(' ', s1 + 1);
    auto s3 = s2 == std::string_view::npos ? s2 : line.find(' ', s2 + 1);
    if (s3 == std::string_view::npos) throw tampered("bad entry on line " + std::to_string(i + 1));
    baseline_entry e;
    e.digest = std::string(line.substr(0, s1));
    auto size_s = line.substr(s1 + 1, s2 - s1 - 1);
    auto mode = parse_octal_mode(line.substr(s2 + 1, s3 - s2 - 1));
    e.rel_path = std::string(line.substr(s3 + 1));
    if (!is_hex64(e.digest) || !mode || size_s.empty() ||
        !std::all_of(size_s.begin(), size_s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw tampered("bad entry on line " + std::to_string(i + 1));
    }
    e.size = std::stoull(std::string(size_s));
    e.mode = *mode;
    auto norm = normalize_rel_path(e.rel_path);
    if (!norm || *norm != e.rel_path || e.rel_path.empty()) throw tampered("non-normalized path " + e.rel_path);
    auto rel = e.rel_path;
    if (!m.entries.emplace(rel, std::move(e)).second) throw tampered("duplicate path " + rel);
  }
  // The canonical form is sorted; anything else was not written by us.
  if (m.canonical_body() != body) throw tampered("non-canonical manifest");
  return m;
}

baseline_manifest build_baseline(const fs::path& root, const baseline_options& opts) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw error(errc::root_not_found, root.string());
  if (!is_token(opts.cms_name) || !is_token(opts.cms_version)) {
    throw error(errc::invalid_parameters, "cms name/version must be single tokens");
  }
  baseline_manifest m;
  m.cms_name = opts.cms_name;
  m.cms_version = opts.cms_version;
  m.exclude_globs = opts.exclude_globs;
  auto stamp = now_ms();
  for (const auto& e : walk_tree(root)) {
    if (m.is_excluded(e.rel)) continue;
    if (e.kind == entry_kind::unreadable) throw error(errc::unreadable_file, e.abs.string());
    if (e.kind != entry_kind::file) continue;
    if (has_control(e.rel)) throw error(errc::unreadable_file, "control character in path " + e.abs.string());
    baseline_entry be;
    be.rel_path = e.rel;
    be.digest = sha256_file_hex(e.abs);
    be.size = fs::file_size(e.abs, ec);
    if (ec) throw error(errc::unreadable_file, e.abs.string());
    be.mode = file_mode(e.abs);
    be.recorded_at = stamp;
    m.entries.emplace(e.rel, std::move(be));
  }
  if (opts.sitemap_document) m.sitemap_urls = parse_sitemap(*opts.sitemap_document);
  m.seal();
  return m;
}

void save_manifest(const fs::path& path, const baseline_manifest& m) { write_file_atomic(path, m.serialize()); }

baseline_manifest load_manifest(const fs::path& path) { return baseline_manifest::parse(read_file(path)); }

// ---------------------------------------------------------------------------
// verification
// ---------------------------------------------------------------------------
integrity_report verify_tree(const fs::path& root, const baseline_manifest& manifest) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw error(errc::root_not_found, root.string());
  if (manifest.manifest_digest != sha256_hex(manifest.canonical_body())) {
    throw error(errc::manifest_tampered, "in-memory manifest does not match its digest");
  }
  integrity_report r;
  std::set<std::string> live;
  for (const auto& e : walk_tree(root)) {
    if (e.kind == entry_kind::directory) continue;
    live.insert(e.rel);
    if (manifest.is_excluded(e.rel)) {
      r.unknown_unhashed.push_back(e.rel);
      continue;
    }
    auto it = manifest.entries.find(e.rel);
    if (it == manifest.entries.end()) {
      r.added.push_back(e.rel);
      continue;
    }
    const auto& base = it->second;
    if (e.kind != entry_kind::file) {
      r.modified.push_back(e.rel);
      continue;
    }
    std::string digest;
    try {
      digest = sha256_file_hex(e.abs);
    } catch (const error&) {
      r.modified.push_back(e.rel);  // fail-suspicious
      continue;
    }
    if (digest != base.digest) {
      r.modified.push_back(e.rel);
      continue;
    }
    unsigned mode = file_mode(e.abs);
    if (mode != base.mode) r.permissions_drift.push_back({e.rel, base.mode, mode});
  }
  for (const auto& [rel, entry] : manifest.entries) {
    if (!live.count(rel)) r.removed.push_back(rel);
  }
  return r;
}

std::string integrity_report::to_json() const {
  json drift = json::array();
  for (const auto& d : permissions_drift) {
    drift.push_back({{"path", d.rel_path},
                     {"expected_mode", mode_to_octal(d.expected_mode)},
                     {"found_mode", mode_to_octal(d.found_mode)}});
  }
  json j{{"modified", modified},
         {"added", added},
         {"removed", removed},
         {"unknown_unhashed", unknown_unhashed},
         {"permissions_drift", drift}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// quarantine
// ---------------------------------------------------------------------------
std::string_view to_string(quarantine_reason r) {
  switch (r) {
    case quarantine_reason::integrity_mismatch: return "integrity_mismatch";
    case quarantine_reason::signature_hit: return "signature_hit";
    case quarantine_reason::manual: return "manual";
  }
  return "manual";
}

std::string_view to_string(quarantine_status s) {
  switch (s) {
    case quarantine_status::held: return "held";
    case quarantine_status::restored: return "restored";
    case quarantine_status::purged: return "purged";
  }
  return "held";
}

namespace {

quarantine_reason parse_reason(const std::string& s) {
  for (auto r : {quarantine_reason::integrity_mismatch, quarantine_reason::signature_hit, quarantine_reason::manual}) {
    if (s == to_string(r)) return r;
  }
  throw error(errc::store_unavailable, "corrupt ledger: reason " + s);
}

quarantine_status parse_status(const std::string& s) {
  for (auto v : {quarantine_status::held, quarantine_status::restored, quarantine_status::purged}) {
    if (s == to_string(v)) return v;
  }
  throw error(errc::store_unavailable, "corrupt ledger: status " + s);
}

class store_lock {
 public:
  store_lock(const fs::path& dir, bool exclusive) {
    fd_ = ::open((dir / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600);
    if (fd_ < 0) throw error(errc::store_unavailable, "cannot open lock in " + dir.string());
    while (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        throw error(errc::store_unavailable, "cannot lock " + dir.string());
      }
    }
  }
  ~store_lock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  store_lock(const store_lock&) = delete;
  store_lock& operator=(const store_lock&) = delete;

 private:
  int fd_ = -1;
};

std::string read_if_regular(const fs::path& p) {
  std::error_code ec;
  auto st = fs::symlink_status(p, ec);
  if (ec || !fs::is_regular_file(st)) return {};
  try {
    return read_file(p);
  } catch (const error&) {
    return {};
  }
}

void write_with_mode(const fs::path& target, std::string_view content, unsigned mode) {
  fs::path tmp = target;
  tmp += ".hg-tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) throw error(errc::io_error, "cannot create " + tmp.string() + ": " + std::strerror(errno));
  std::string_view rest = content;
  while (!rest.empty()) {
    auto n = ::write(fd, rest.data(), rest.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw error(errc::io_error, "write failed: " + tmp.string());
    }
    rest.remove_prefix(static_cast<std::size_t>(n));
  }
  ::fchmod(fd, mode);
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw error(errc::io_error, "rename failed: " + target.string());
  }
}

}  // namespace

std::string quarantine_store::placeholder_text(std::uint64_t entry_id, std::string_view digest) {
  return "HOSTGUARD-QUARANTINED entry_id=" + std::to_string(entry_id) + " sha256=" + std::string(digest) +
         "\n";
}

quarantine_store::quarantine_store(fs::path dir, std::function<timestamp_ms()> clock)
    : dir_(std::move(dir)), clock_(std::move(clock)) {
  std::error_code ec;
  fs::create_directories(dir_ / "blobs", ec);
  if (ec || !fs::is_directory(dir_ / "blobs")) throw error(errc::store_unavailable, dir_.string());
  recover();
}

std::map<std::uint64_t, quarantine_entry> quarantine_store::load_locked() const {
  std::map<std::uint64_t, quarantine_entry> out;
  std::ifstream in(ledger_path());
  if (!in) return out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      auto op = j.at("op").get<std::string>();
      auto id = j.at("entry_id").get<std::uint64_t>();
      if (op == "quarantine") {
        quarantine_entry e;
        e.entry_id = id;
        e.original_path = j.at("original_path").get<std::string>();
        e.stored_blob = j.at("stored_blob").get<std::string>();
        e.reason = parse_reason(j.at("reason").get<std::string>());
        e.detail = j.at("detail").get<std::string>();
        e.created_at = parse_utc(j.at("created_at").get<std::string>()).value_or(0);
        e.digest = j.at("digest").get<std::string>();
        e.mode = parse_octal_mode(j.at("mode").get<std::string>()).value_or(0);
        e.size = j.at("size").get<std::uintmax_t>();
        e.status = quarantine_status::held;
        out[id] = std::move(e);
      } else if (op == "status") {
        auto it = out.find(id);
        if (it == out.end()) throw error(errc::store_unavailable, "status for unknown entry");
        it->second.status = parse_status(j.at("status").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw error(errc::store_unavailable, "corrupt ledger line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void quarantine_store::recover() {
  store_lock lock(dir_, true);
  // Roll forward entries whose ledger record committed but whose original
  // was never replaced by the placeholder.
  for (const auto& [id, e] : load_locked()) {
    if (e.status != quarantine_status::held) continue;
    auto current = read_if_regular(e.original_path);
    if (!current.empty() && sha256_hex(current) == e.digest) {
      write_with_mode(e.original_path, placeholder_text(id, e.digest), 0);
    }
  }
  // Stale temporaries from interrupted writes.
  std::error_code ec;
  for (auto& p : fs::directory_iterator(dir_ / "blobs", ec)) {
    if (p.path().extension() == ".hg-tmp") fs::remove(p.path(), ec);
  }
}

std::vector<quarantine_entry> quarantine_store::entries() const {
  store_lock lock(dir_, false);
  std::vector<quarantine_entry> out;
  for (auto& [id, e] : load_locked()) out.push_back(e);
  return out;
}

std::optional<quarantine_entry> quarantine_store::find(std::uint64_t entry_id) const {
  store_lock lock(dir_, false);
  auto all = load_locked();
  auto it = all.find(entry_id);
  if (it == all.end()) return std::nullopt;
  return it->second;
}

quarantine_entry quarantine_store::quarantine_file(const fs::path& path, quarantine_reason reason,
                                                   std::string detail) {
  store_lock lock(dir_, true);
  std::error_code ec;
  auto st = fs::symlink_status(path, ec);
  if (ec || !fs::exists(st)) throw error(errc::not_a_regular_file, "no such file: " + path.string());
  if (!fs::is_regular_file(st)) throw error(errc::not_a_regular_file, path.string());
  auto abs = fs::weakly_canonical(fs::absolute(path)).string();

  auto entries = load_locked();
  for (const auto& [id, e] : entries) {
    if (e.original_path == abs && e.status == quarantine_status::held) {
      throw error(errc::already_quarantined, abs + " is entry " + std::to_string(id));
    }
  }
  std::string content;
  try {
    content = read_file(abs);
  } catch (const error&) {
    throw error(errc::not_a_regular_file, "unreadable: " + abs);
  }
  quarantine_entry e;
  e.entry_id = entries.empty() ? 1 : entries.rbegin()->first + 1;
  e.original_path = abs;
  e.digest = sha256_hex(content);
  e.stored_blob = "blobs/" + e.digest;
  e.reason = reason;
  e.detail = "sha256=" + e.digest + (detail.empty() ? "" : "; " + detail);
  e.created_at = clock_();
  e.mode = file_mode(abs);
  e.size = content.size();

  auto blob = dir_ / e.stored_blob;
  try {
    if (!fs::exists(blob)) write_with_mode(blob, content, 0400);
  } catch (const error& ex) {
    throw error(errc::store_unavailable, ex.what());
  }
  if (fault_hook) fault_hook("blob_stored");

  json rec{{"op", "quarantine"},
           {"entry_id", e.entry_id},
           {"original_path", e.original_path},
           {"stored_blob", e.stored_blob},
           {"reason", to_string(e.reason)},
           {"detail", e.detail},
           {"created_at", format_utc(e.created_at)},
           {"digest", e.digest},
           {"mode", mode_to_octal(e.mode)},
           {"size", e.size}};
  try {
    append_line_durable(ledger_path(), rec.dump(-1, ' ', false, json::error_handler_t::replace));
  } catch (const error& ex) {
    throw error(errc::store_unavailable, ex.what());
  }
  if (fault_hook) fault_hook("ledger_committed");

  write_with_mode(abs, placeholder_text(e.entry_id, e.digest), 0);
  return e;
}

fs::path quarantine_store::restore_file(std::uint64_t entry_id) {
  store_lock lock(dir_, true);
  auto entries = load_locked();
  auto it = entries.find(entry_id);
  if (it == entries.end()) throw error(errc::unknown_entry, std::to_string(entry_id));
  auto& e = it->second;
  if (e.status != quarantine_status::held) {
    throw error(errc::not_held, std::to_string(entry_id) + " is " + std::string(to_string(e.status)));
  }
  std::error_code ec;
  if (fs::exists(fs::symlink_status(e.original_path, ec))) {
    if (read_if_regular(e.original_path) != placeholder_text(entry_id, e.digest)) {
      throw error(errc::target_occupied, e.original_path);
    }
  }
  std::string content;
  try {
    content = read_file(dir_ / e.stored_blob);
  } catch (const error& ex) {
    throw error(errc::store_unavailable, ex.what());
  }
  if (sha256_hex(content) != e.digest) throw error(errc::store_unavailable, "blob digest mismatch for " + e.stored_blob);
  fs::create_directories(fs::path(e.original_path).parent_path(), ec);
  write_with_mode(e.original_path, content, e.mode);
  json rec{{"op", "status"}, {"entry_id", entry_id}, {"status", "restored"}, {"at", format_utc(clock_())}};
  append_line_durable(ledger_path(), rec.dump());
  return e.original_path;
}

quarantine_entry quarantine_store::purge(std::uint64_t entry_id) {
  store_lock lock(dir_, true);
  auto entries = load_locked();
  auto it = entries.find(entry_id);
  if (it == entries.end()) throw error(errc::unknown_entry, std::to_string(entry_id));
  auto e = it->second;
  if (e.status != quarantine_status::held) {
    throw error(errc::not_held, std::to_string(entry_id) + " is " + std::string(to_string(e.status)));
  }
  json rec{{"op", "status"}, {"entry_id", entry_id}, {"status", "purged"}, {"at", format_utc(clock_())}};
  append_line_durable(ledger_path(), rec.dump());
  e.status = quarantine_status::purged;

  std::error_code ec;
  if (read_if_regular(e.original_path) == placeholder_text(entry_id, e.digest)) fs::remove(e.original_path, ec);
  bool shared = std::any_of(entries.begin(), entries.end(), [&](const auto& kv) {
    return kv.first != entry_id && kv.second.digest == e.digest && kv.second.status != quarantine_status::purged;
  });
  if (!shared) fs::remove(dir_ / e.stored_blob, ec);
  return e;
}

}  // namespace hostguard::integrity
