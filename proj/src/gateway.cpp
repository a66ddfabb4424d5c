#include "hostguard/gateway.hpp"

#include <openssl/crypto.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hostguard/error.hpp"

namespace hostguard::gateway {

using json = nlohmann::json;

namespace {

constexpr std::size_t evidence_value_limit = 200;

std::string clip(std::string_view s, std::size_t limit = evidence_value_limit) {
  if (s.size() <= limit) return std::string(s);
  return std::string(s.substr(0, limit)) + "...";
}

std::string_view strip_query(std::string_view path) {
  auto q = path.find('?');
  return q == std::string_view::npos ? path : path.substr(0, q);
}

bool is_token_char(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }

json pairs_to_json(const param_list& ps) {
  json a = json::array();
  for (const auto& [k, v] : ps) a.push_back(json::array({k, v}));
  return a;
}

param_list pairs_from_json(const json& j, const char* field) {
  if (!j.is_array()) throw error(errc::invalid_request, std::string(field) + " must be an array of pairs");
  param_list out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
      throw error(errc::invalid_request, std::string(field) + " entries must be [name, value]");
    out.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// records
// ---------------------------------------------------------------------------
std::string request_record::header(std::string_view name) const {
  for (const auto& [k, v] : headers)
    if (iequals(k, name)) return v;
  return {};
}

std::string request_record::to_json() const {
  json j;
  j["source_ip"] = source_ip.to_string();
  j["method"] = method;
  j["path"] = path;
  j["query"] = pairs_to_json(query_params);
  j["body"] = pairs_to_json(body_params);
  j["headers"] = pairs_to_json(headers);
  json ups = json::array();
  for (const auto& u : uploads) {
    ups.push_back({{"field", u.field},
                   {"filename", u.filename},
                   {"size", u.size},
                   {"first_bytes_b64", base64_encode(as_bytes(u.first_bytes))}});
  }
  j["uploads"] = std::move(ups);
  j["received_at"] = format_utc(received_at);
  if (login) j["login_outcome"] = *login == login_outcome::success ? "success" : "failure";
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

request_record request_record::from_json(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw error(errc::invalid_request, e.what());
  }
  if (!j.is_object()) throw error(errc::invalid_request, "request must be a JSON object");
  static const std::set<std::string> known{"source_ip", "method", "path",    "query",       "body",
                                           "headers",   "uploads", "received_at", "login_outcome"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw error(errc::invalid_request, "unknown field " + it.key());

  auto str = [&](const char* k) -> std::string {
    if (!j.contains(k) || !j[k].is_string()) throw error(errc::invalid_request, std::string("missing string field ") + k);
    return j[k].get<std::string>();
  };

  request_record r;
  auto ip = net::parse_ip(str("source_ip"));
  if (!ip) throw error(errc::invalid_request, "source_ip does not parse");
  r.source_ip = *ip;
  r.method = str("method");
  if (r.method.empty() || r.method.size() > 16 || !std::all_of(r.method.begin(), r.method.end(), is_token_char))
    throw error(errc::invalid_request, "bad method " + r.method);
  r.path = str("path");
  if (r.path.empty() || r.path[0] != '/') throw error(errc::invalid_request, "path must start with /");
  auto t = parse_utc(str("received_at"));
  if (!t) throw error(errc::invalid_request, "received_at does not parse");
  r.received_at = *t;
  if (j.contains("query")) r.query_params = pairs_from_json(j["query"], "query");
  if (j.contains("body")) r.body_params = pairs_from_json(j["body"], "body");
  if (j.contains("headers")) r.headers = pairs_from_json(j["headers"], "headers");
  if (j.contains("uploads")) {
    if (!j["uploads"].is_array()) throw error(errc::invalid_request, "uploads must be an array");
    for (const auto& u : j["uploads"]) {
      if (!u.is_object() || !u.contains("filename") || !u["filename"].is_string())
        throw error(errc::invalid_request, "upload needs a filename");
      upload_part p;
      p.filename = u["filename"].get<std::string>();
      if (u.contains("field")) {
        if (!u["field"].is_string()) throw error(errc::invalid_request, "upload field must be text");
        p.field = u["field"].get<std::string>();
      }
      if (u.contains("size")) {
        if (!u["size"].is_number_unsigned()) throw error(errc::invalid_request, "upload size must be unsigned");
        p.size = u["size"].get<std::uint64_t>();
      }
      if (u.contains("first_bytes_b64")) {
        if (!u["first_bytes_b64"].is_string()) throw error(errc::invalid_request, "first_bytes_b64 must be text");
        auto raw = base64_decode(u["first_bytes_b64"].get<std::string>());
        if (!raw) throw error(errc::invalid_request, "first_bytes_b64 is not base64");
        if (raw->size() > upload_prefix_bytes) raw->resize(upload_prefix_bytes);
        p.first_bytes = std::move(*raw);
      }
      r.uploads.push_back(std::move(p));
    }
  }
  if (j.contains("login_outcome")) {
    auto o = j["login_outcome"];
    if (o == "success") r.login = login_outcome::success;
    else if (o == "failure") r.login = login_outcome::failure;
    else throw error(errc::invalid_request, "login_outcome must be success or failure");
  }
  return r;
}

param_list parse_query_string(std::string_view qs) {
  param_list out;
  for (const auto& part : split(qs, '&')) {
    if (part.empty()) continue;
    auto eq = part.find('=');
    if (eq == std::string::npos) out.emplace_back(part, "");
    else out.emplace_back(part.substr(0, eq), part.substr(eq + 1));
  }
  return out;
}

std::string_view to_string(decision d) {
  switch (d) {
    case decision::allow: return "allow";
    case decision::challenge: return "challenge";
    case decision::block: return "block";
  }
  return "?";
}

std::string_view to_string(stage s) {
  switch (s) {
    case stage::maintenance: return "maintenance";
    case stage::reputation: return "reputation";
    case stage::geo: return "geo";
    case stage::agent: return "agent";
    case stage::blacklist: return "blacklist";
    case stage::payload: return "payload";
    case stage::inclusion: return "inclusion";
    case stage::upload: return "upload";
    case stage::login_rate: return "login_rate";
    case stage::request_rate: return "request_rate";
    case stage::clean: return "clean";
  }
  return "?";
}

std::string verdict::to_json() const {
  json j;
  j["seq"] = seq;
  j["request_id"] = request_id;
  j["received_at"] = format_utc(received_at);
  j["source_ip"] = source_ip;
  j["method"] = method;
  j["path"] = path;
  j["decision"] = std::string(to_string(dec));
  j["stage"] = std::string(to_string(where));
  j["reason_code"] = reason_code;
  j["evidence"] = evidence;
  if (challenge_id) j["challenge_id"] = *challenge_id;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// policy
// ---------------------------------------------------------------------------
bool policy::set(std::string_view key, std::string_view value) {
  auto bad = [&](const char* what) {
    return error(errc::invalid_policy, std::string(key) + ": " + what + " (" + std::string(value) + ")");
  };
  auto count = [&]() -> std::uint64_t {
    auto v = trim(value);
    std::uint64_t n = 0;
    if (v.empty() || v.size() > 12) throw bad("expected a count");
    for (char c : v) {
      if (!std::isdigit(static_cast<unsigned char>(c))) throw bad("expected a count");
      n = n * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return n;
  };
  auto duration = [&]() -> std::int64_t {
    auto v = trim(value);
    if (!v.empty() && std::all_of(v.begin(), v.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return static_cast<std::int64_t>(count()) * 1000;
    auto d = parse_duration_ms(v);
    if (!d) throw bad("expected a duration");
    return *d;
  };
  auto list = [&]() { return split_list(value); };
  auto lower_set = [&]() {
    std::set<std::string> s;
    for (auto& x : list()) s.insert(to_lower(x));
    return s;
  };

  if (key == "failed_login_threshold") failed_login_threshold = static_cast<unsigned>(count());
  else if (key == "login_window") login_window_ms = duration();
  else if (key == "rate_threshold") rate_threshold = static_cast<unsigned>(count());
  else if (key == "rate_scope") {
    auto v = trim(value);
    if (v == "site_wide") scope = rate_scope::site_wide;
    else if (v == "per_ip") scope = rate_scope::per_ip;
    else throw bad("expected site_wide or per_ip");
  } else if (key == "blocked_agent_patterns") blocked_agent_patterns = list();
  else if (key == "banned_upload_extensions") {
    banned_upload_extensions.clear();
    for (auto e : lower_set()) {
      if (!e.empty() && e[0] == '.') e.erase(0, 1);
      banned_upload_extensions.insert(e);
    }
  } else if (key == "blocked_countries") {
    blocked_countries.clear();
    for (auto& c : list()) blocked_countries.insert(to_upper(c));
  } else if (key == "crawler_allowlist") crawler_allowlist = list();
  else if (key == "dnsbl_zones") {
    dnsbl_zones.clear();
    for (auto& z : list()) dnsbl_zones.push_back(to_lower(z));
  } else if (key == "dnsbl_ipv6_zones") dnsbl_ipv6_zones = lower_set();
  else if (key == "dnsbl_fail_open") {
    if (!parse_bool(value, dnsbl_fail_open)) throw bad("expected a boolean");
  } else if (key == "dnsbl_timeout_ms") dnsbl_timeout_ms = static_cast<int>(count());
  else if (key == "maintenance_token") maintenance_token = std::string(trim(value));
  else if (key == "login_paths") {
    login_paths.clear();
    for (auto& p : list()) login_paths.insert(p);
  } else if (key == "payload_min_severity") {
    auto s = signatures::parse_severity(trim(value));
    if (!s) throw bad("expected low, medium, high or critical");
    payload_min_severity = *s;
  } else if (key == "blacklist_capacity") blacklist_capacity = count();
  else if (key == "blacklist_fp_target") {
    try {
      std::size_t used = 0;
      std::string v(trim(value));
      blacklist_fp_target = std::stod(v, &used);
      if (used != v.size()) throw bad("expected a probability");
    } catch (const std::logic_error&) {
      throw bad("expected a probability");
    }
  } else if (key == "reputation_cache") reputation_cache_ms = duration();
  else return false;
  return true;
}

void policy::finalize() {
  auto bad = [](const std::string& m) { return error(errc::invalid_policy, m); };
  if (failed_login_threshold < 1) throw bad("failed_login_threshold must be at least 1");
  if (rate_threshold < 1) throw bad("rate_threshold must be at least 1");
  if (login_window_ms < 1000) throw bad("login_window must be at least 1s");
  if (dnsbl_timeout_ms < 1 || dnsbl_timeout_ms > 10'000) throw bad("dnsbl_timeout_ms must be in 1..10000");
  if (blacklist_capacity < 1) throw bad("blacklist_capacity must be at least 1");
  if (!(blacklist_fp_target > 0.0 && blacklist_fp_target < 1.0)) throw bad("blacklist_fp_target must be in (0, 1)");
  if (reputation_cache_ms < 0) throw bad("reputation_cache must not be negative");

  agent_regexes.clear();
  for (const auto& p : blocked_agent_patterns) {
    try {
      agent_regexes.push_back(regex::compile(p, true));
    } catch (const error& e) {
      throw bad("blocked_agent_patterns: " + std::string(e.what()));
    }
  }
  crawler_ranges.clear();
  for (const auto& c : crawler_allowlist) {
    auto r = net::parse_cidr(c);
    if (!r) throw bad("crawler_allowlist: bad CIDR " + c);
    crawler_ranges.push_back(*r);
  }
  for (const auto& c : blocked_countries) {
    if (c.size() != 2 || !std::isalpha(static_cast<unsigned char>(c[0])) || !std::isalpha(static_cast<unsigned char>(c[1])))
      throw bad("blocked_countries: not an ISO alpha-2 code: " + c);
  }
  for (const auto& z : dnsbl_zones)
    if (!reputation::valid_zone(z)) throw bad("dnsbl_zones: invalid zone " + z);
  for (const auto& z : dnsbl_ipv6_zones)
    if (!reputation::valid_zone(z)) throw bad("dnsbl_ipv6_zones: invalid zone " + z);
  for (const auto& e : banned_upload_extensions)
    if (e.empty() || e.find('.') != std::string::npos) throw bad("banned_upload_extensions: bad extension " + e);
  for (const auto& p : login_paths)
    if (p.empty() || p[0] != '/') throw bad("login_paths: must start with /: " + p);
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------
stage_outcome maintenance_gate(const request_record& req, mode m, const policy& pol) {
  if (m == mode::production) return stage_outcome::ok();
  if (pol.maintenance_token.empty())
    throw error(errc::maintenance_token_unset, "maintenance mode needs a maintenance_token");
  auto expected = sha256(as_bytes(pol.maintenance_token));
  for (const auto& [k, v] : req.query_params) {
    if (percent_decode(k, true) != "access") continue;
    auto given = sha256(as_bytes(percent_decode(v, true)));
    if (CRYPTO_memcmp(given.data(), expected.data(), given.size()) == 0) return stage_outcome::ok();
  }
  return stage_outcome::fail(decision::block, "maintenance_mode");
}

stage_outcome geo_allow(const net::ip_address& ip, const geo::range_table* table, const policy& pol) {
  for (const auto& r : pol.crawler_ranges)
    if (r.contains(ip)) return stage_outcome::ok();
  if (pol.blocked_countries.empty() || !table) return stage_outcome::ok();
  auto country = table->lookup(ip);
  if (country && pol.blocked_countries.count(*country))
    return stage_outcome::fail(decision::block, "geo_blocked", {"country=" + *country});
  return stage_outcome::ok();
}

stage_outcome agent_allowed(std::string_view user_agent, const policy& pol) {
  auto ua = trim(user_agent);
  if (ua.empty()) return stage_outcome::fail(decision::block, "missing_agent");
  for (const auto& r : pol.agent_regexes) {
    if (r.contains_match(ua))
      return stage_outcome::fail(decision::block, "scripted_agent", {"agent=" + clip(ua), "pattern=" + r.pattern()});
  }
  return stage_outcome::ok();
}

namespace {

bool escapes_root(std::string_view v) {
  int depth = 0;
  std::size_t i = 0;
  while (i <= v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j] != '/' && v[j] != '\\') ++j;
    auto seg = trim(v.substr(i, j - i));
    if (seg == "..") {
      if (--depth < 0) return true;
    } else if (!seg.empty() && seg != ".") {
      ++depth;
    }
    i = j + 1;
  }
  return false;
}

bool remote_scheme(std::string_view v) {
  auto s = to_lower(trim(v));
  for (std::string_view p : {"http://", "https://", "ftp://", "php://", "data:"})
    if (s.rfind(p, 0) == 0) return true;
  return false;
}

bool has_escape(std::string_view v) {
  for (std::size_t i = 0; i + 2 < v.size(); ++i)
    if (v[i] == '%' && std::isxdigit(static_cast<unsigned char>(v[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(v[i + 2])))
      return true;
  return false;
}

}  // namespace

stage_outcome inclusion_check_value(std::string_view name, std::string_view raw_value) {
  std::string v1 = percent_decode(raw_value, true);
  std::string v2 = percent_decode(v1, false);
  auto ev = [&](const std::string& decoded) {
    return std::vector<std::string>{"param=" + clip(name), "value=" + clip(decoded)};
  };
  for (const std::string* v : {&v1, &v2}) {
    if (escapes_root(*v)) return stage_outcome::fail(decision::block, "LFI", ev(*v));
    if (remote_scheme(*v)) return stage_outcome::fail(decision::block, "RFI", ev(*v));
  }
  if (has_escape(v2)) return stage_outcome::fail(decision::block, "ENCODING_DEPTH", ev(v2));
  return stage_outcome::ok();
}

stage_outcome inclusion_check(const request_record& req) {
  for (const auto* ps : {&req.query_params, &req.body_params}) {
    for (const auto& [k, v] : *ps) {
      auto o = inclusion_check_value(percent_decode(k, true), v);
      if (!o.pass) return o;
    }
  }
  return stage_outcome::ok();
}

namespace {

/// Every dot-separated extension of a client-supplied file name after
/// normalizing the tricks that servers silently undo.
std::vector<std::string> filename_extensions(std::string_view filename) {
  std::string name(filename);
  for (char& c : name)
    if (c == '\0') c = '.';
  auto slash = name.find_last_of("/\\");
  if (slash != std::string::npos) name.erase(0, slash + 1);
  auto colon = name.find(':');
  if (colon != std::string::npos) name.erase(colon);
  name = to_lower(name);
  while (!name.empty() && (name.back() == '.' || name.back() == ' ')) name.pop_back();
  auto parts = split(name, '.');
  std::vector<std::string> exts;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    auto e = std::string(trim(parts[i]));
    if (!e.empty()) exts.push_back(e);
  }
  return exts;
}

bool starts_with_php_tag(std::string_view b) {
  if (b.substr(0, 3) == "\xEF\xBB\xBF") b.remove_prefix(3);
  while (!b.empty() && std::isspace(static_cast<unsigned char>(b.front()))) b.remove_prefix(1);
  return starts_with_icase(b, "<?php");
}

}  // namespace

stage_outcome upload_check(const std::vector<upload_part>& parts, const policy& pol) {
  for (const auto& p : parts) {
    for (const auto& e : filename_extensions(p.filename)) {
      if (pol.banned_upload_extensions.count(e))
        return stage_outcome::fail(decision::block, "banned_extension",
                                   {"filename=" + clip(p.filename), "extension=" + e});
    }
    if (starts_with_php_tag(p.first_bytes))
      return stage_outcome::fail(decision::block, "php_content", {"filename=" + clip(p.filename)});
  }
  return stage_outcome::ok();
}

stage_outcome payload_check(const request_record& req, const signatures::signature_set& sigs, const policy& pol) {
  for (const auto* ps : {&req.query_params, &req.body_params}) {
    for (const auto& [k, v] : *ps) {
      auto name = percent_decode(k, true);
      auto decoded = percent_decode(v, true);
      for (const auto& h : signatures::scan_content(decoded, sigs, "param:" + name)) {
        if (h.level < pol.payload_min_severity) continue;
        return stage_outcome::fail(decision::block, "payload_signature",
                                   {"param=" + clip(name), "signature=" + h.signature_id,
                                    "class=" + std::string(signatures::to_string(h.klass)),
                                    "excerpt=" + clip(h.matched_excerpt)});
      }
    }
  }
  return stage_outcome::ok();
}

std::string path_template(std::string_view path) {
  std::string p = to_lower(percent_decode(strip_query(path), false));
  std::string out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(p[i]))) {
      while (i + 1 < p.size() && std::isdigit(static_cast<unsigned char>(p[i + 1]))) ++i;
      out.push_back('#');
    } else {
      out.push_back(p[i]);
    }
  }
  return out;
}

std::string blacklist_key(const request_record& req) {
  return req.source_ip.to_string() + "|" + req.method + "|" + path_template(req.path);
}

// ---------------------------------------------------------------------------
// challenge state
// ---------------------------------------------------------------------------
challenge_decision login_tracker::check(const std::string& ip, timestamp_ms t) {
  std::lock_guard lk(mu_);
  challenge_decision d;
  auto it = failures_.find(ip);
  if (it == failures_.end()) return d;
  auto& q = it->second;
  while (!q.empty() && q.front() <= t - window_ms_) q.pop_front();
  if (q.empty()) {
    failures_.erase(it);
    return d;
  }
  if (q.size() >= threshold_) {
    d.required = true;
    d.trigger = challenge_trigger::failed_logins;
  }
  return d;
}

challenge_decision login_tracker::note_login(const std::string& ip, login_outcome outcome, timestamp_ms t) {
  {
    std::lock_guard lk(mu_);
    if (outcome == login_outcome::success) {
      failures_.erase(ip);
    } else {
      failures_[ip].push_back(t);
    }
  }
  return check(ip, t);
}

challenge_decision rate_limiter::note_rate(const std::string& key, timestamp_ms t) {
  std::lock_guard lk(mu_);
  auto& q = windows_[key];
  q.push_back(t);
  while (!q.empty() && q.front() <= t - 1000) q.pop_front();
  challenge_decision d;
  if (q.size() > threshold_) {
    d.required = true;
    d.trigger = challenge_trigger::rate;
  }
  // Per-address keys would otherwise accumulate forever.
  if (windows_.size() > 4096) {
    for (auto it = windows_.begin(); it != windows_.end();) {
      if (it->first != key && (it->second.empty() || it->second.back() <= t - 1000)) it = windows_.erase(it);
      else ++it;
    }
  }
  return d;
}

std::size_t rate_limiter::count(const std::string& key) const {
  std::lock_guard lk(mu_);
  auto it = windows_.find(key);
  return it == windows_.end() ? 0 : it->second.size();
}

std::string echo_challenge::issue(const std::string& challenge_id) {
  std::lock_guard lk(mu_);
  open_.insert(challenge_id);
  return std::string(challenge_id.rbegin(), challenge_id.rend());
}

bool echo_challenge::verify(const std::string& challenge_id, const std::string& answer) {
  std::lock_guard lk(mu_);
  auto it = open_.find(challenge_id);
  if (it == open_.end()) return false;
  if (answer != std::string(challenge_id.rbegin(), challenge_id.rend())) return false;
  open_.erase(it);
  return true;
}

// ---------------------------------------------------------------------------
// blacklist
// ---------------------------------------------------------------------------
blacklist::blacklist(std::uint64_t capacity, double fp_target, fs::path store)
    : capacity_(capacity), fp_target_(fp_target), store_(std::move(store)),
      bloom_(bloom_set::create(capacity, fp_target)) {
  if (!store_.empty()) {
    std::error_code ec;
    auto parent = store_.parent_path();
    if (!parent.empty() && !fs::is_directory(parent, ec))
      throw error(errc::state_unavailable, "blacklist store directory missing: " + parent.string());
    std::unique_lock lk(mu_);
    refresh_locked();
  }
}

void blacklist::refresh_locked() {
  if (store_.empty()) return;
  if (simulate_store_failure) throw error(errc::state_unavailable, "blacklist store unreachable");
  std::error_code ec;
  if (!fs::exists(store_, ec)) {
    if (ec) throw error(errc::state_unavailable, "cannot stat " + store_.string());
    return;
  }
  std::ifstream in(store_, std::ios::binary);
  if (!in) throw error(errc::state_unavailable, "cannot read " + store_.string());
  in.seekg(static_cast<std::streamoff>(store_offset_));
  std::string chunk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  for (;;) {
    auto nl = chunk.find('\n', pos);
    if (nl == std::string::npos) break;  // a partial line is finished by its writer later
    auto line = std::string_view(chunk).substr(pos, nl - pos);
    pos = nl + 1;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      continue;
    }
    if (!j.is_object() || !j.contains("key") || !j["key"].is_string()) continue;
    auto key = j["key"].get<std::string>();
    if (j.value("op", "") == "mark") {
      if (exact_.insert(key).second) {
        bloom_.insert(key);
        if (bloom_.n_inserted() > bloom_.n_expected()) rotate_locked();
      }
    } else if (j.value("op", "") == "unmark") {
      exact_.erase(key);
    }
  }
  store_offset_ += pos;
}

void blacklist::rotate_locked() {
  std::uint64_t n = std::max<std::uint64_t>(capacity_, 2 * static_cast<std::uint64_t>(exact_.size()));
  bloom_set fresh = bloom_set::create(n, fp_target_);
  for (const auto& k : exact_) fresh.insert(k);
  bloom_ = std::move(fresh);
  epoch_.fetch_add(1);
}

void blacklist::append(const std::string& op, const std::string& key, timestamp_ms at) {
  if (store_.empty()) return;
  if (simulate_store_failure) throw error(errc::state_unavailable, "blacklist store unreachable");
  json j{{"op", op}, {"key", key}, {"at", format_utc(at)}};
  try {
    append_line_durable(store_, j.dump(-1, ' ', false, json::error_handler_t::replace));
  } catch (const error& e) {
    throw error(errc::state_unavailable, e.what());
  }
}

void blacklist::mark(const std::string& key, timestamp_ms at) {
  std::unique_lock lk(mu_);
  refresh_locked();
  if (exact_.count(key)) return;
  append("mark", key, at);
  exact_.insert(key);
  bloom_.insert(key);
  if (bloom_.n_inserted() > bloom_.n_expected()) rotate_locked();
}

bool blacklist::hit(const std::string& key) {
  if (!store_.empty()) {
    if (simulate_store_failure) throw error(errc::state_unavailable, "blacklist store unreachable");
    std::error_code ec;
    auto size = fs::file_size(store_, ec);
    bool stale;
    {
      std::shared_lock lk(mu_);
      stale = !ec && size != store_offset_;
    }
    if (stale) {
      std::unique_lock lk(mu_);
      refresh_locked();
    }
  }
  std::shared_lock lk(mu_);
  if (!bloom_.contains(key)) return false;
  exact_lookups_.fetch_add(1);
  return exact_.count(key) != 0;
}

std::size_t blacklist::unblock_ip(const std::string& ip, timestamp_ms at) {
  std::unique_lock lk(mu_);
  refresh_locked();
  std::string prefix = ip + "|";
  std::vector<std::string> doomed;
  for (const auto& k : exact_)
    if (k.rfind(prefix, 0) == 0) doomed.push_back(k);
  std::sort(doomed.begin(), doomed.end());
  for (const auto& k : doomed) {
    append("unmark", k, at);
    exact_.erase(k);
  }
  return doomed.size();
}

bool blacklist::contains_exact(const std::string& key) const {
  std::shared_lock lk(mu_);
  return exact_.count(key) != 0;
}

std::size_t blacklist::size() const {
  std::shared_lock lk(mu_);
  return exact_.size();
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------
gateway::gateway(policy pol, gateway_deps deps, mode m)
    : pol_(std::move(pol)), deps_(std::move(deps)), mode_(m), rates_(pol_.rate_threshold),
      logins_(pol_.failed_login_threshold, pol_.login_window_ms) {
  if (pol_.agent_regexes.size() != pol_.blocked_agent_patterns.size() ||
      pol_.crawler_ranges.size() != pol_.crawler_allowlist.size())
    pol_.finalize();
  if (m == mode::maintenance && pol_.maintenance_token.empty())
    throw error(errc::maintenance_token_unset, "maintenance mode needs a maintenance_token");
}

bool gateway::is_login_attempt(const request_record& req) const {
  return req.method == "POST" && pol_.login_paths.count(std::string(strip_query(req.path))) != 0;
}

challenge_decision gateway::note_login(const net::ip_address& ip, login_outcome outcome, timestamp_ms t) {
  return logins_.note_login(ip.to_string(), outcome, t);
}

stage_outcome gateway::reputation_stage(const request_record& req) {
  auto ip = req.source_ip.to_string();
  for (std::size_t i = 0; i < deps_.resolvers.size(); ++i) {
    std::vector<reputation::result> results;
    bool cached = false;
    {
      std::lock_guard lk(cache_mu_);
      auto it = rep_cache_.find({ip, i});
      if (it != rep_cache_.end()) {
        if (req.received_at >= it->second.first && req.received_at - it->second.first < pol_.reputation_cache_ms) {
          results = it->second.second;
          cached = true;
        } else {
          rep_cache_.erase(it);
        }
      }
    }
    if (!cached) {
      results = deps_.resolvers[i]->check(req.source_ip);
      bool any_failed = std::any_of(results.begin(), results.end(), [](const auto& r) { return r.failed; });
      if (!any_failed && pol_.reputation_cache_ms > 0) {
        std::lock_guard lk(cache_mu_);
        if (rep_cache_.size() > 65536) rep_cache_.clear();
        rep_cache_[{ip, i}] = {req.received_at, results};
      }
    }
    for (const auto& r : results) {
      if (r.failed && deps_.warn)
        deps_.warn("reputation lookup failed for " + ip + " on " + r.zone + " (" + r.note + "); " +
                   (r.listed ? "failing closed" : "failing open"));
      if (r.listed) {
        std::vector<std::string> ev{"zone=" + r.zone};
        if (r.response_code) ev.push_back("code=" + r.response_code->to_string());
        if (r.failed) ev.push_back("lookup_failed=" + r.note);
        return stage_outcome::fail(decision::block, "reputation_listed", std::move(ev));
      }
    }
  }
  return stage_outcome::ok();
}

bool gateway::challenge_solved(const request_record& req) {
  if (!deps_.challenges) return false;
  auto h = std::string(trim(req.header("X-HostGuard-Challenge")));
  auto colon = h.find(':');
  if (colon == std::string::npos) return false;
  return deps_.challenges->verify(h.substr(0, colon), h.substr(colon + 1));
}

verdict gateway::evaluate(const request_record& req) {
  verdict v;
  v.seq = seq_.fetch_add(1) + 1;
  v.request_id = sha256_hex(std::to_string(v.seq) + "\n" + req.to_json()).substr(0, 32);
  v.received_at = req.received_at;
  v.source_ip = req.source_ip.to_string();
  v.method = req.method;
  v.path = req.path;

  auto finish = [&](stage s, stage_outcome o) -> verdict {
    v.where = s;
    v.dec = o.dec;
    v.reason_code = std::move(o.reason);
    v.evidence = std::move(o.evidence);
    if (v.dec == decision::challenge) {
      v.challenge_id = "ch-" + v.request_id;
      if (deps_.challenges) deps_.challenges->issue(*v.challenge_id);
    }
    if (deps_.block_log) deps_.block_log(v);
    return v;
  };
  auto unavailable = [&](stage s, const error& e) {
    if (deps_.warn) deps_.warn(std::string("blacklist state unavailable: ") + e.what());
    return finish(s, stage_outcome::fail(decision::challenge, "state_unavailable", {"stage=" + std::string(to_string(s))}));
  };

  if (auto o = maintenance_gate(req, mode_.load(), pol_); !o.pass) return finish(stage::maintenance, std::move(o));

  const std::string key = blacklist_key(req);
  if (deps_.list) {
    try {
      if (deps_.list->hit(key))
        return finish(stage::blacklist, stage_outcome::fail(decision::block, "blacklisted", {"key=" + clip(key)}));
    } catch (const error& e) {
      if (e.code() != errc::state_unavailable) throw;
      return unavailable(stage::blacklist, e);
    }
  }

  if (auto o = reputation_stage(req); !o.pass) return finish(stage::reputation, std::move(o));
  if (auto o = geo_allow(req.source_ip, deps_.geo, pol_); !o.pass) return finish(stage::geo, std::move(o));

  // Content verdicts also blacklist the request shape so repeats stop at
  // the cheap lookup.
  auto content_block = [&](stage s, stage_outcome o) {
    if (deps_.list) {
      try {
        deps_.list->mark(key, req.received_at);
      } catch (const error& e) {
        if (e.code() != errc::state_unavailable) throw;
        if (deps_.warn) deps_.warn(std::string("blacklist mark failed: ") + e.what());
      }
    }
    return finish(s, std::move(o));
  };
  if (auto o = agent_allowed(req.header("User-Agent"), pol_); !o.pass) return content_block(stage::agent, std::move(o));
  if (auto o = inclusion_check(req); !o.pass) return content_block(stage::inclusion, std::move(o));
  if (deps_.sigs) {
    if (auto o = payload_check(req, *deps_.sigs, pol_); !o.pass) return content_block(stage::payload, std::move(o));
  }
  if (auto o = upload_check(req.uploads, pol_); !o.pass) return content_block(stage::upload, std::move(o));

  auto rate_key = pol_.scope == rate_scope::site_wide ? std::string("*") : v.source_ip;
  auto rate = rates_.note_rate(rate_key, req.received_at);
  challenge_decision login;
  if (is_login_attempt(req)) login = logins_.check(v.source_ip, req.received_at);
  if ((login.required || rate.required) && !challenge_solved(req)) {
    if (login.required)
      return finish(stage::login_rate,
                    stage_outcome::fail(decision::challenge, "failed_logins",
                                        {"threshold=" + std::to_string(pol_.failed_login_threshold)}));
    return finish(stage::request_rate,
                  stage_outcome::fail(decision::challenge, "rate_exceeded",
                                      {"count=" + std::to_string(rates_.count(rate_key)),
                                       "threshold=" + std::to_string(pol_.rate_threshold)}));
  }
  v.where = stage::clean;
  v.dec = decision::allow;
  return v;
}

std::string replay(std::string_view trace, gateway& gw, std::vector<verdict>* out) {
  std::string log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < trace.size()) {
    auto nl = trace.find('\n', pos);
    auto line = trace.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? trace.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    request_record req;
    try {
      req = request_record::from_json(line);
    } catch (const error& e) {
      throw error(errc::invalid_request, "line " + std::to_string(line_no) + ": " + e.what());
    }
    auto v = gw.evaluate(req);
    if (v.dec == decision::allow && req.login && gw.is_login_attempt(req))
      gw.note_login(req.source_ip, *req.login, req.received_at);
    log += v.to_json();
    log += '\n';
    if (out) out->push_back(std::move(v));
  }
  return log;
}

// ---------------------------------------------------------------------------
// warning page
// ---------------------------------------------------------------------------
std::string human_reason(std::string_view code) {
  static const std::map<std::string, std::string, std::less<>> reasons{
      {"LFI", "local file inclusion"},
      {"RFI", "remote file inclusion"},
      {"ENCODING_DEPTH", "over-encoded parameter"},
      {"payload_signature", "malicious payload"},
      {"banned_extension", "forbidden upload type"},
      {"php_content", "script content in upload"},
      {"scripted_agent", "automated client"},
      {"missing_agent", "missing browser identification"},
      {"geo_blocked", "access from this region is restricted"},
      {"reputation_listed", "source address is on a reputation blacklist"},
      {"blacklisted", "repeated attack attempt"},
      {"maintenance_mode", "site under maintenance"},
      {"failed_logins", "too many failed login attempts"},
      {"rate_exceeded", "too many requests"},
      {"state_unavailable", "security state unavailable"},
  };
  auto it = reasons.find(code);
  return it == reasons.end() ? "security policy" : it->second;
}

namespace {

constexpr std::size_t page_evidence_limit = 120;
constexpr std::size_t page_evidence_items = 8;

// Evidence is attacker-controlled: keep printable ASCII only, then escape.
std::string safe_evidence(std::string_view s) {
  std::string clean;
  for (char c : s.substr(0, page_evidence_limit)) {
    auto u = static_cast<unsigned char>(c);
    clean.push_back(u >= 0x20 && u < 0x7f ? c : '?');
  }
  if (s.size() > page_evidence_limit) clean += "...";
  return html_escape(clean);
}

}  // namespace

std::string render_warning(const verdict& v) {
  if (v.dec == decision::allow) throw error(errc::precondition_violated, "no warning page for an allowed request");
  const bool challenge = v.dec == decision::challenge;
  const std::string title = challenge ? "Verification required" : "Request blocked";
  const std::string line = (challenge ? "verification required: " : "request blocked: ") + human_reason(v.reason_code);
  std::ostringstream o;
  o << "<!DOCTYPE html>\n"
    << "<html lang=\"en\">\n"
    << "<head>\n<meta charset=\"utf-8\">\n<meta name=\"robots\" content=\"noindex\">\n"
    << "<title>" << title << "</title>\n</head>\n"
    << "<body>\n"
    << "<h1>" << title << "</h1>\n"
    << "<p class=\"reason\">" << html_escape(line) << "</p>\n"
    << "<p>Request ID: <code class=\"request-id\">" << html_escape(v.request_id) << "</code></p>\n";
  if (!v.evidence.empty()) {
    o << "<ul class=\"evidence\">\n";
    for (std::size_t i = 0; i < v.evidence.size() && i < page_evidence_items; ++i)
      o << "<li>" << safe_evidence(v.evidence[i]) << "</li>\n";
    o << "</ul>\n";
  }
  if (challenge) {
    auto id = html_escape(v.challenge_id.value_or(""));
    o << "<form class=\"challenge\" method=\"get\" data-challenge-id=\"" << id << "\">\n"
      << "<p>Complete the verification to continue.</p>\n"
      << "<input type=\"hidden\" name=\"challenge_id\" value=\"" << id << "\">\n"
      << "</form>\n";
  }
  o << "<p>If you believe this is a mistake, contact the site administrator and quote the request ID.</p>\n"
    << "</body>\n</html>\n";
  return o.str();
}

}  // namespace hostguard::gateway
