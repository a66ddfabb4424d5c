#include "hostguard/hardening.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "hostguard/error.hpp"

namespace hostguard::hardening {

using json = nlohmann::json;

namespace {

// A short list of the most common leaked passwords, used when no list file
// is configured.
const char* const builtin_weak[] = {
    "123456",   "123456789", "12345678", "12345",    "1234567",  "password", "password1", "qwerty",
    "abc123",   "111111",    "123123",   "admin",    "letmein",  "welcome",  "monkey",    "dragon",
    "iloveyou", "1234",      "000000",   "qwerty123", "1q2w3e4r", "sunshine", "master",    "admin123",
    "root",     "toor",      "changeme", "passw0rd", "trustno1", "football", "baseball",  "princess"};

std::int64_t parse_int(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    auto s = std::string(trim(v));
    auto n = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return n;
  } catch (const std::exception&) {
    throw error(errc::invalid_policy, std::string(key) + ": not an integer: " + std::string(v));
  }
}

unsigned parse_mode(std::string_view key, std::string_view v) {
  auto m = parse_octal_mode(trim(v));
  if (!m || *m > 07777) throw error(errc::invalid_policy, std::string(key) + ": not an octal mode: " + std::string(v));
  return *m;
}

bool directive_on(std::string_view v) {
  bool b = false;
  return parse_bool(v, b) && b;
}

std::string regex_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '/' && c != '_' && c != '-') out += '\\';
    out += c;
  }
  return out;
}

std::string quote_arg(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

bool policy::set(std::string_view key, std::string_view value) {
  auto k = to_lower(trim(key));
  if (k == "banned_functions") {
    banned_functions.clear();
    for (auto& f : split_list(value)) banned_functions.push_back(to_lower(f));
  } else if (k == "max_session_lifetime") {
    max_session_lifetime = parse_int(k, value);
  } else if (k == "max_file_mode") {
    max_file_mode = parse_mode(k, value);
  } else if (k == "max_dir_mode") {
    max_dir_mode = parse_mode(k, value);
  } else if (k == "forbidden_usernames") {
    forbidden_usernames.clear();
    for (auto& u : split_list(value)) forbidden_usernames.insert(to_lower(u));
  } else if (k == "min_password_entropy_bits") {
    try {
      min_password_entropy_bits = std::stod(std::string(trim(value)));
    } catch (const std::exception&) {
      throw error(errc::invalid_policy, "min_password_entropy_bits: not a number");
    }
  } else if (k == "weak_password_list") {
    weak_password_list = std::string(trim(value));
  } else {
    return false;
  }
  return true;
}

void policy::finalize() {
  if (banned_functions.empty()) throw error(errc::invalid_policy, "banned_functions must not be empty");
  if (max_session_lifetime < 1) throw error(errc::invalid_policy, "max_session_lifetime must be positive");
  if (!(min_password_entropy_bits >= 0)) throw error(errc::invalid_policy, "min_password_entropy_bits");
  weak_passwords.clear();
  if (weak_password_list.empty()) {
    weak_passwords.insert(std::begin(builtin_weak), std::end(builtin_weak));
    return;
  }
  std::string text;
  try {
    text = read_file(weak_password_list);
  } catch (const error& e) {
    throw error(errc::invalid_policy, std::string("weak_password_list: ") + e.what());
  }
  for (auto& line : split(text, '\n')) {
    auto w = trim(line);
    if (!w.empty() && w[0] != '#') weak_passwords.insert(std::string(w));
  }
}

policy parse_policy(std::string_view text, const fs::path& base_dir) {
  policy p;
  for (const auto& e : parse_ini(text, errc::invalid_policy)) {
    if (!e.section.empty() && e.section != "hardening") continue;
    if (!p.set(e.key, e.value)) {
      throw error(errc::invalid_policy, "line " + std::to_string(e.line) + ": unknown key " + e.key);
    }
  }
  if (!p.weak_password_list.empty() && p.weak_password_list.is_relative() && !base_dir.empty())
    p.weak_password_list = base_dir / p.weak_password_list;
  p.finalize();
  return p;
}

std::string_view to_string(category c) {
  switch (c) {
    case category::runtime_config: return "runtime_config";
    case category::permissions: return "permissions";
    case category::credentials: return "credentials";
    case category::transport: return "transport";
    case category::session: return "session";
  }
  return "runtime_config";
}

std::string finding::to_json() const {
  json j{{"finding_id", finding_id},
         {"category", to_string(cat)},
         {"subject", subject},
         {"observed", observed},
         {"expected", expected},
         {"severity", signatures::to_string(level)},
         {"remediable", remediable}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string findings_jsonl(const std::vector<finding>& fs) {
  std::string out;
  for (const auto& f : fs) out += f.to_json() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// audits
// ---------------------------------------------------------------------------
std::vector<finding> audit_runtime_config(std::string_view config_doc, const policy& pol) {
  std::map<std::string, std::string> directives;  // last one wins, like php
  for (const auto& e : parse_ini(config_doc, errc::config_parse_error)) directives[to_lower(e.key)] = e.value;

  std::set<std::string> disabled;
  if (auto it = directives.find("disable_functions"); it != directives.end()) {
    for (auto& f : split_list(it->second)) disabled.insert(to_lower(f));
  }
  std::vector<finding> out;
  for (const auto& fn : pol.banned_functions) {
    if (fn == "allow_url_include") {
      auto it = directives.find(fn);
      bool explicit_off = false;
      bool off = false;
      if (it != directives.end()) explicit_off = parse_bool(it->second, off) && !off && !trim(it->second).empty();
      if (!explicit_off) {
        out.push_back({"runtime.directive:allow_url_include", category::runtime_config, "allow_url_include",
                       it == directives.end() ? "unset" : it->second, "Off", severity::critical, true});
      }
      continue;
    }
    if (!disabled.count(fn)) {
      out.push_back({"runtime.disable_functions:" + fn, category::runtime_config, fn, "enabled", "disabled",
                     severity::high, true});
    }
  }
  if (auto it = directives.find("display_errors"); it != directives.end() && directive_on(it->second)) {
    out.push_back({"runtime.directive:display_errors", category::runtime_config, "display_errors", it->second, "Off",
                   severity::medium, true});
  }
  if (auto it = directives.find("session.gc_maxlifetime"); it != directives.end()) {
    std::int64_t v = 0;
    try {
      v = std::stoll(std::string(trim(it->second)));
    } catch (const std::exception&) {
      throw error(errc::config_parse_error, "session.gc_maxlifetime is not a number: " + it->second);
    }
    if (v > pol.max_session_lifetime) {
      out.push_back({"session.gc_maxlifetime", category::session, "session.gc_maxlifetime", it->second,
                     std::to_string(pol.max_session_lifetime), severity::medium, true});
    }
  }
  return out;
}

std::vector<finding> audit_filesystem(const fs::path& root, const policy& pol) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw error(errc::root_not_found, root.string());
  std::vector<tree_entry> entries{{".", root, entry_kind::directory}};
  auto walked = walk_tree(root, false, true);
  entries.insert(entries.end(), walked.begin(), walked.end());

  std::vector<finding> out;
  for (const auto& e : entries) {
    if (e.kind != entry_kind::file && e.kind != entry_kind::directory) continue;
    struct stat sb{};
    if (::lstat(e.abs.c_str(), &sb) != 0) continue;
    unsigned mode = static_cast<unsigned>(sb.st_mode) & 07777u;
    bool dir = e.kind == entry_kind::directory;
    unsigned max = dir ? pol.max_dir_mode : pol.max_file_mode;
    if ((mode & ~max) == 0) continue;
    finding f;
    f.finding_id = std::string(dir ? "perm.dir:" : "perm.file:") + e.rel;
    f.cat = category::permissions;
    f.subject = dir && e.rel != "." ? e.rel + "/" : e.rel;
    f.observed = mode_to_octal(mode);
    f.expected = mode_to_octal(max);
    f.level = (mode & 0002) ? severity::critical : (mode & 06000) ? severity::high : severity::medium;
    f.remediable = false;  // needs chmod by the operator
    out.push_back(std::move(f));
  }
  return out;
}

double password_entropy_bits(std::string_view pw) {
  bool lower = false, upper = false, digit = false, symbol = false;
  for (unsigned char c : pw) {
    if (c >= 'a' && c <= 'z') lower = true;
    else if (c >= 'A' && c <= 'Z') upper = true;
    else if (c >= '0' && c <= '9') digit = true;
    else symbol = true;
  }
  int pool = (lower ? 26 : 0) + (upper ? 26 : 0) + (digit ? 10 : 0) + (symbol ? 33 : 0);
  if (pool == 0) return 0;
  return static_cast<double>(pw.size()) * std::log2(static_cast<double>(pool));
}

std::vector<finding> audit_credentials(std::string_view cred_doc, const policy& pol) {
  std::vector<finding> out;
  int lineno = 0;
  for (const auto& raw : split(cred_doc, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& why) {
      return error(errc::cred_doc_parse_error, "line " + std::to_string(lineno) + ": " + why);
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
    if (!j.contains("account") || !j["account"].is_string()) throw fail("missing account");
    bool has_pw = j.contains("password"), has_hash = j.contains("hash");
    if (has_pw == has_hash) throw fail("exactly one of password or hash is required");
    if ((has_pw && !j["password"].is_string()) || (has_hash && !j["hash"].is_string())) throw fail("not a string");
    auto account = j["account"].get<std::string>();
    auto realm = j.value("realm", std::string());
    auto who = realm.empty() ? account : account + "@" + realm;
    if (pol.forbidden_usernames.count(to_lower(account))) {
      out.push_back({"cred.username:" + who, category::credentials, who, "forbidden username " + account,
                     "a non-default account name", severity::high, false});
    }
    if (has_pw) {
      auto pw = j["password"].get<std::string>();
      double bits = password_entropy_bits(pw);
      bool listed = pol.weak_passwords.count(pw) != 0;
      if (listed || bits < pol.min_password_entropy_bits) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f bits%s", bits, listed ? ", in weak password list" : "");
        char want[32];
        std::snprintf(want, sizeof want, ">= %.1f bits", pol.min_password_entropy_bits);
        out.push_back({"cred.weak_password:" + who, category::credentials, who, buf, want,
                       listed ? severity::critical : severity::high, false});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// remediation
// ---------------------------------------------------------------------------
remediation_bundle emit_remediation(const std::vector<finding>& findings) {
  remediation_bundle b;
  std::set<std::string> functions;
  std::map<std::string, std::string> directives;
  std::set<std::string> deny_dirs;
  for (const auto& f : findings) {
    const auto& id = f.finding_id;
    if (id.rfind("runtime.disable_functions:", 0) == 0) {
      functions.insert(f.subject);
    } else if (id.rfind("runtime.directive:", 0) == 0 || id == "session.gc_maxlifetime") {
      directives[f.subject] = f.expected;
    } else if (id.rfind("perm.dir:", 0) == 0) {
      auto rel = id.substr(9);
      if (rel != ".") deny_dirs.insert(rel);
      b.manual_steps.push_back("chmod " + f.expected + " '" + f.subject + "' (found " + f.observed + ")");
    } else if (id.rfind("perm.file:", 0) == 0) {
      b.manual_steps.push_back("chmod " + f.expected + " '" + f.subject + "' (found " + f.observed + ")");
    } else if (id.rfind("cred.username:", 0) == 0) {
      b.manual_steps.push_back("rename or remove account " + f.subject + ": " + f.observed);
    } else if (id.rfind("cred.weak_password:", 0) == 0) {
      b.manual_steps.push_back("set a strong password for " + f.subject + " (" + f.observed + ")");
    } else {
      b.manual_steps.push_back("review " + f.finding_id + ": expected " + f.expected + ", found " + f.observed);
    }
  }
  if (!functions.empty() || !directives.empty()) {
    b.runtime_overrides = "; hostguard runtime overrides\n";
    if (!functions.empty()) {
      b.runtime_overrides += "disable_functions = " + join({functions.begin(), functions.end()}, ",") + "\n";
    }
    for (const auto& [k, v] : directives) b.runtime_overrides += k + " = " + v + "\n";
  }
  if (!deny_dirs.empty()) {
    b.access_rules = "# hostguard access rules\n<IfModule mod_rewrite.c>\nRewriteEngine On\n";
    for (const auto& d : deny_dirs) {
      b.access_rules += "RewriteRule " + quote_arg("^" + regex_escape(d) + "/.*\\.(php[0-9]?|phtml|phar|pl|py|cgi|sh)$") +
                        " - [F,NC]\n";
    }
    b.access_rules += "</IfModule>\n";
  }
  if (!findings.empty()) {
    b.manual_steps.push_back("enable HTTPS for the site and redirect plain HTTP to it");
    b.manual_steps.push_back("enable SEO-friendly URLs so query-string entry points are not exposed");
    b.manual_steps.push_back("enable page caching by default");
  }
  return b;
}

}  // namespace hostguard::hardening
