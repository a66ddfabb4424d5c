#include "hostguard/util.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <ctime>
#include <fstream>
#include <memory>
#include <random>

namespace hostguard {

std::string_view to_string(errc code) {
  switch (code) {
    case errc::malformed_signature_file: return "MalformedSignatureFile";
    case errc::duplicate_id: return "DuplicateId";
    case errc::pattern_compile_error: return "PatternCompileError";
    case errc::root_not_found: return "RootNotFound";
    case errc::unreadable_file: return "UnreadableFile";
    case errc::manifest_tampered: return "ManifestTampered";
    case errc::malformed_manifest: return "MalformedManifest";
    case errc::already_quarantined: return "AlreadyQuarantined";
    case errc::store_unavailable: return "StoreUnavailable";
    case errc::unknown_entry: return "UnknownEntry";
    case errc::not_held: return "NotHeld";
    case errc::target_occupied: return "TargetOccupied";
    case errc::not_a_regular_file: return "NotARegularFile";
    case errc::config_parse_error: return "ConfigParseError";
    case errc::cred_doc_parse_error: return "CredDocParseError";
    case errc::invalid_policy: return "InvalidPolicy";
    case errc::invalid_parameters: return "InvalidParameters";
    case errc::malformed_bloom: return "MalformedBloom";
    case errc::state_unavailable: return "StateUnavailable";
    case errc::maintenance_token_unset: return "MaintenanceTokenUnset";
    case errc::invalid_request: return "InvalidRequest";
    case errc::invalid_address: return "InvalidAddress";
    case errc::malformed_geo_table: return "MalformedGeoTable";
    case errc::access_rule_parse_error: return "AccessRuleParseError";
    case errc::precondition_violated: return "PreconditionViolated";
    case errc::stream_unreadable: return "StreamUnreadable";
    case errc::insufficient_data: return "InsufficientData";
    case errc::missing_feature: return "MissingFeature";
    case errc::sitemap_parse_error: return "SitemapParseError";
    case errc::sink_unavailable: return "SinkUnavailable";
    case errc::config_error: return "ConfigError";
    case errc::io_error: return "IoError";
  }
  return "Error";
}

// ---------------------------------------------------------------------------
// strings
// ---------------------------------------------------------------------------
std::string_view trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  for (auto& piece : split(s, sep)) {
    auto t = trim(piece);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string to_upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool parse_bool(std::string_view s, bool& out) {
  auto v = to_lower(trim(s));
  if (v == "1" || v == "on" || v == "true" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "0" || v == "off" || v == "false" || v == "no" || v == "none" || v.empty()) {
    out = false;
    return true;
  }
  return false;
}

static int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string percent_decode(std::string_view s, bool plus_as_space) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '%' && i + 2 < s.size()) {
      int hi = hex_value(s[i + 1]);
      int lo = hex_value(s[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    if (c == '+' && plus_as_space) {
      out.push_back(' ');
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20 && c != '\n' && c != '\t') {
          out += "&#xFFFD;";
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

std::string to_hex(bytes_view data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (unsigned char b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

std::string base64_encode(bytes_view data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                          static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<std::string> base64_decode(std::string_view s) {
  if (s.size() % 4 != 0) return std::nullopt;
  std::string out(3 * s.size() / 4, '\0');
  int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(s.data()),
                          static_cast<int>(s.size()));
  if (n < 0) return std::nullopt;
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock does not account for padding.
  if (!s.empty() && s.back() == '=') --len;
  if (s.size() >= 2 && s[s.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

// ---------------------------------------------------------------------------
// hashing
// ---------------------------------------------------------------------------
namespace {
struct md_ctx_deleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using md_ctx_ptr = std::unique_ptr<EVP_MD_CTX, md_ctx_deleter>;
}  // namespace

sha256_digest sha256(bytes_view data) {
  sha256_digest out{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

std::string sha256_hex(bytes_view data) { return to_hex(sha256(data)); }
std::string sha256_hex(std::string_view data) { return sha256_hex(as_bytes(data)); }

std::string sha256_file_hex(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw error(errc::unreadable_file, p.string());
  md_ctx_ptr ctx(EVP_MD_CTX_new());
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    auto got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
  }
  if (in.bad()) throw error(errc::unreadable_file, p.string());
  sha256_digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), out.data(), &len);
  return to_hex(out);
}

// ---------------------------------------------------------------------------
// time
// ---------------------------------------------------------------------------
timestamp_ms now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string format_utc(timestamp_ms t) {
  std::int64_t secs = t >= 0 ? t / 1000 : (t - 999) / 1000;
  int ms = static_cast<int>(t - secs * 1000);
  std::time_t tt = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
  return buf;
}

std::optional<timestamp_ms> parse_utc(std::string_view s) {
  // YYYY-MM-DDTHH:MM:SS[.fff]Z
  if (s.size() < 20) return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len, int& out) {
    out = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
      out = out * 10 + (s[i] - '0');
    }
    return true;
  };
  int y, mo, d, h, mi, sec, ms = 0;
  if (!num(0, 4, y) || s[4] != '-' || !num(5, 2, mo) || s[7] != '-' || !num(8, 2, d) ||
      (s[10] != 'T' && s[10] != ' ') || !num(11, 2, h) || s[13] != ':' || !num(14, 2, mi) ||
      s[16] != ':' || !num(17, 2, sec)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    std::size_t start = ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    std::size_t digits = pos - start;
    if (digits == 0) return std::nullopt;
    int frac = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      frac = frac * 10 + (i < digits ? s[start + i] - '0' : 0);
    }
    ms = frac;
  }
  if (pos + 1 != s.size() || s[pos] != 'Z') return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = sec;
  std::time_t secs = timegm(&tm);
  return static_cast<timestamp_ms>(secs) * 1000 + ms;
}

std::optional<std::int64_t> parse_duration_ms(std::string_view s) {
  s = trim(s);
  if (s.size() < 2) return std::nullopt;
  std::int64_t n = 0;
  std::size_t i = 0;
  for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
    n = n * 10 + (s[i] - '0');
    if (n > (std::int64_t{1} << 40)) return std::nullopt;
  }
  if (i == 0 || i + 1 != s.size()) return std::nullopt;
  switch (s[i]) {
    case 's': return n * 1000;
    case 'm': return n * 60'000;
    case 'h': return n * 3'600'000;
    case 'd': return n * 86'400'000;
    default: return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// paths and files
// ---------------------------------------------------------------------------
namespace {

bool glob_segment(std::string_view pat, std::string_view seg) {
  std::size_t p = 0, s = 0, star_p = std::string_view::npos, star_s = 0;
  while (s < seg.size()) {
    if (p < pat.size() && (pat[p] == '?' || pat[p] == seg[s])) {
      ++p;
      ++s;
    } else if (p < pat.size() && pat[p] == '*') {
      star_p = p++;
      star_s = s;
    } else if (star_p != std::string_view::npos) {
      p = star_p + 1;
      s = ++star_s;
    } else {
      return false;
    }
  }
  while (p < pat.size() && pat[p] == '*') ++p;
  return p == pat.size();
}

bool glob_parts(const std::vector<std::string>& pat, std::size_t pi,
                const std::vector<std::string>& path, std::size_t si) {
  if (pi == pat.size()) return si == path.size();
  if (pat[pi] == "**") {
    for (std::size_t k = si; k <= path.size(); ++k) {
      if (glob_parts(pat, pi + 1, path, k)) return true;
    }
    return false;
  }
  if (si == path.size()) return false;
  return glob_segment(pat[pi], path[si]) && glob_parts(pat, pi + 1, path, si + 1);
}

}  // namespace

bool glob_match(std::string_view pattern, std::string_view path) {
  auto pat = split(pattern, '/');
  auto parts = split(path, '/');
  // `dir/**` must match at least one component below dir.
  if (pat.size() >= 2 && pat.back() == "**" && parts.size() < pat.size()) {
    return false;
  }
  return glob_parts(pat, 0, parts, 0);
}

bool any_glob_match(const std::vector<std::string>& patterns, std::string_view path) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& g) { return glob_match(g, path); });
}

std::optional<std::string> normalize_rel_path(std::string_view p) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() -> bool {
    if (cur.empty() || cur == ".") {
    } else if (cur == "..") {
      if (out.empty()) return false;
      out.pop_back();
    } else {
      out.push_back(cur);
    }
    cur.clear();
    return true;
  };
  for (char c : p) {
    if (c == '/' || c == '\\') {
      if (!flush()) return std::nullopt;
    } else {
      cur.push_back(c);
    }
  }
  if (!flush()) return std::nullopt;
  return join(out, "/");
}

namespace {

void walk_dir(const fs::path& dir, const std::string& prefix, bool follow, bool include_dirs,
              std::vector<std::pair<dev_t, ino_t>>& seen, std::vector<tree_entry>& out) {
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) {
    out.push_back({prefix.empty() ? "." : prefix, dir, entry_kind::unreadable});
    return;
  }
  std::vector<fs::path> children;
  for (; it != fs::directory_iterator(); it.increment(ec)) {
    if (ec) break;
    children.push_back(it->path());
  }
  if (ec) out.push_back({prefix.empty() ? "." : prefix, dir, entry_kind::unreadable});
  std::sort(children.begin(), children.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  for (const auto& child : children) {
    std::string name = child.filename().string();
    std::string rel = prefix.empty() ? name : prefix + "/" + name;
    struct stat sb{};
    if (::lstat(child.c_str(), &sb) != 0) {
      out.push_back({rel, child, entry_kind::unreadable});
      continue;
    }
    if (S_ISLNK(sb.st_mode)) {
      if (!follow) {
        out.push_back({rel, child, entry_kind::symlink});
        continue;
      }
      if (::stat(child.c_str(), &sb) != 0) {
        out.push_back({rel, child, entry_kind::unreadable});
        continue;
      }
    }
    if (S_ISDIR(sb.st_mode)) {
      std::pair<dev_t, ino_t> id{sb.st_dev, sb.st_ino};
      if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
      seen.push_back(id);
      if (include_dirs) out.push_back({rel, child, entry_kind::directory});
      walk_dir(child, rel, follow, include_dirs, seen, out);
      seen.pop_back();
    } else if (S_ISREG(sb.st_mode)) {
      out.push_back({rel, child, entry_kind::file});
    } else {
      out.push_back({rel, child, entry_kind::other});
    }
  }
}

}  // namespace

std::vector<tree_entry> walk_tree(const fs::path& root, bool follow_symlinks, bool include_dirs) {
  std::vector<tree_entry> out;
  std::vector<std::pair<dev_t, ino_t>> seen;
  struct stat sb{};
  if (::stat(root.c_str(), &sb) == 0) seen.push_back({sb.st_dev, sb.st_ino});
  walk_dir(root, "", follow_symlinks, include_dirs, seen, out);
  std::sort(out.begin(), out.end(), [](const tree_entry& a, const tree_entry& b) { return a.rel < b.rel; });
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot read " + p.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw error(errc::io_error, "read failed: " + p.string());
  return data;
}

namespace {
void write_all(int fd, std::string_view data, const fs::path& p) {
  while (!data.empty()) {
    auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw error(errc::io_error, "write failed: " + p.string() + ": " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}
}  // namespace

void write_file_atomic(const fs::path& p, std::string_view content) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  fs::path tmp = p;
  tmp += ".tmp" + std::to_string(rng() & 0xffffff);
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw error(errc::io_error, "cannot create " + tmp.string() + ": " + std::strerror(errno));
  write_all(fd, content, tmp);
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw error(errc::io_error, "rename failed: " + p.string());
  }
}

void append_line_durable(const fs::path& p, std::string_view line) {
  int fd = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw error(errc::io_error, "cannot open " + p.string() + ": " + std::strerror(errno));
  std::string buf(line);
  buf.push_back('\n');
  write_all(fd, buf, p);
  ::fsync(fd);
  ::close(fd);
}

std::string mode_to_octal(unsigned mode) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%o", mode & 07777u);
  std::string s = buf;
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

std::optional<unsigned> parse_octal_mode(std::string_view s) {
  s = trim(s);
  if (s.empty() || s.size() > 5) return std::nullopt;
  unsigned v = 0;
  for (char c : s) {
    if (c < '0' || c > '7') return std::nullopt;
    v = v * 8 + static_cast<unsigned>(c - '0');
  }
  if (v > 07777) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// ini
// ---------------------------------------------------------------------------
std::vector<ini_entry> parse_ini(std::string_view text, errc parse_error) {
  std::vector<ini_entry> out;
  std::string section;
  int lineno = 0;
  for (auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line.front() == ';' || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw error(parse_error, "line " + std::to_string(lineno) + ": malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw error(parse_error, "line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw error(parse_error, "line " + std::to_string(lineno) + ": empty key");
    }
    if (!value.empty() && value.front() == '"') {
      auto close = value.find('"', 1);
      if (close == std::string_view::npos) {
        throw error(parse_error, "line " + std::to_string(lineno) + ": unterminated quote");
      }
      auto rest = trim(value.substr(close + 1));
      if (!rest.empty() && rest.front() != ';' && rest.front() != '#') {
        throw error(parse_error, "line " + std::to_string(lineno) + ": trailing text after quoted value");
      }
      value = value.substr(1, close - 1);
    } else {
      // inline comment after whitespace
      for (std::size_t i = 1; i < value.size(); ++i) {
        if ((value[i] == ';') && (value[i - 1] == ' ' || value[i - 1] == '\t')) {
          value = trim(value.substr(0, i));
          break;
        }
      }
    }
    out.push_back({section, std::string(key), std::string(value), lineno});
  }
  return out;
}

}  // namespace hostguard
