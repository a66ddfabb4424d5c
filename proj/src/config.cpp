#include "hostguard/config.hpp"

#include <charconv>

#include "hostguard/error.hpp"

namespace hostguard {

namespace {

const char* const sections[] = {"paths", "hardening", "gateway", "monitor"};

struct setting {
  std::string section;
  std::string key;
  std::string value;
  std::string origin;  // "line N" or the variable name
};

fs::path resolve(const fs::path& base, std::string_view v) {
  if (v.empty()) return {};
  fs::path p{std::string(v)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

template <typename T>
T number(const setting& s) {
  T out{};
  auto v = trim(s.value);
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size())
    throw error(errc::config_error, s.section + "." + s.key + " (" + s.origin + "): expected a number");
  return out;
}

bool apply_path(config& c, const fs::path& base, const setting& s) {
  std::map<std::string_view, fs::path*> paths{
      {"web_root", &c.web_root},       {"manifest", &c.manifest_path},
      {"signatures", &c.signature_path}, {"quarantine_dir", &c.quarantine_dir},
      {"geo_table", &c.geo_table_path}, {"reputation_fixture", &c.reputation_fixture},
      {"state_dir", &c.state_dir},     {"verdict_log", &c.verdict_log},
      {"block_log", &c.block_log},     {"alerts_log", &c.alerts_log},
      {"dead_letter", &c.dead_letter}, {"event_log", &c.event_log},
      {"php_ini", &c.php_ini},         {"credentials", &c.credentials},
      {"sitemap", &c.sitemap},         {"blacklist_store", &c.blacklist_store}};
  auto it = paths.find(s.key);
  if (it == paths.end()) return false;
  *it->second = resolve(base, trim(s.value));
  return true;
}

bool apply_gateway(config& c, const setting& s) {
  if (s.key == "mode") {
    auto v = to_lower(trim(s.value));
    if (v == "production") c.mode = gateway::mode::production;
    else if (v == "maintenance") c.mode = gateway::mode::maintenance;
    else throw error(errc::config_error, "gateway.mode (" + s.origin + "): expected production or maintenance");
    return true;
  }
  if (s.key == "listen") return c.listen = std::string(trim(s.value)), true;
  if (s.key == "upstream") return c.upstream = std::string(trim(s.value)), true;
  if (s.key == "dns_server") return c.dns_server = std::string(trim(s.value)), true;
  return c.gateway.set(s.key, s.value);
}

bool apply_monitor(config& c, const fs::path& base, const setting& s) {
  if (s.key == "window_s") {
    c.window_s = number<std::int64_t>(s);
    if (c.window_s < 1) throw error(errc::config_error, "monitor.window_s must be at least 1");
  } else if (s.key == "group_by") {
    auto v = to_lower(trim(s.value));
    if (v == "script") c.grouping = monitor::group_by::script;
    else if (v == "global") c.grouping = monitor::group_by::global;
    else throw error(errc::config_error, "monitor.group_by (" + s.origin + "): expected script or global");
  } else if (s.key == "tree") {
    c.tree_path = resolve(base, trim(s.value));
  } else if (s.key == "sitemap_url") {
    c.sitemap_url = std::string(trim(s.value));
  } else if (s.key == "sitemap_threshold") {
    c.sitemap_threshold = number<std::size_t>(s);
  } else if (s.key == "smtp_spool") {
    c.smtp_spool = resolve(base, trim(s.value));
  } else if (s.key == "mail_from") {
    c.mail_from = std::string(trim(s.value));
  } else if (s.key == "mail_to") {
    c.mail_to = std::string(trim(s.value));
  } else if (s.key == "max_retries") {
    c.max_retries = number<unsigned>(s);
  } else if (s.key == "backoff_ms") {
    c.backoff_ms = number<std::int64_t>(s);
    if (c.backoff_ms < 0) throw error(errc::config_error, "monitor.backoff_ms must not be negative");
  } else {
    return c.thresholds.set(s.key, s.value);
  }
  return true;
}

std::vector<setting> env_settings(const env_map& env) {
  std::vector<setting> out;
  for (const auto& [name, value] : env) {
    if (!name.starts_with("HOSTGUARD_") || name == "HOSTGUARD_CONFIG") continue;
    std::string_view rest = std::string_view(name).substr(10);
    bool matched = false;
    for (const char* sec : sections) {
      auto prefix = to_upper(sec) + "_";
      if (rest.starts_with(prefix) && rest.size() > prefix.size()) {
        out.push_back({sec, to_lower(rest.substr(prefix.size())), value, name});
        matched = true;
        break;
      }
    }
    if (!matched) throw error(errc::config_error, "unknown environment override " + name);
  }
  return out;
}

config build(std::vector<setting> settings, const fs::path& base, fs::path source) {
  config c;
  c.source = std::move(source);
  // A relative weak_password_list is relative to the config file as well.
  for (const auto& s : settings) {
    bool known = false;
    try {
      if (s.section == "paths") known = apply_path(c, base, s);
      else if (s.section == "hardening")
        known = s.key == "weak_password_list" ? c.hardening.set(s.key, resolve(base, trim(s.value)).string())
                                              : c.hardening.set(s.key, s.value);
      else if (s.section == "gateway") known = apply_gateway(c, s);
      else if (s.section == "monitor") known = apply_monitor(c, base, s);
      else throw error(errc::config_error, "unknown section [" + s.section + "] (" + s.origin + ")");
    } catch (const error& e) {
      if (e.code() == errc::config_error) throw;
      throw error(errc::config_error, s.section + "." + s.key + " (" + s.origin + "): " + e.what());
    }
    if (!known) throw error(errc::config_error, "unknown key " + s.section + "." + s.key + " (" + s.origin + ")");
  }
  if (!c.state_dir.empty()) {
    auto dflt = [&](fs::path& p, const char* name) {
      if (p.empty()) p = c.state_dir / name;
    };
    dflt(c.verdict_log, "verdicts.jsonl");
    dflt(c.block_log, "blocks.jsonl");
    dflt(c.alerts_log, "alerts.jsonl");
    dflt(c.dead_letter, "dead-letter.jsonl");
    dflt(c.quarantine_dir, "quarantine");
    dflt(c.blacklist_store, "blacklist.jsonl");
  }
  try {
    c.hardening.finalize();
    c.gateway.finalize();
  } catch (const error& e) {
    throw error(errc::config_error, e.what());
  }
  return c;
}

}  // namespace

config parse_config(std::string_view text, const fs::path& base_dir, const env_map& env) {
  std::vector<setting> settings;
  for (auto& e : parse_ini(text, errc::config_error)) {
    if (e.section.empty())
      throw error(errc::config_error, "key " + e.key + " on line " + std::to_string(e.line) + " is outside a section");
    settings.push_back({to_lower(e.section), to_lower(e.key), e.value, "line " + std::to_string(e.line)});
  }
  for (auto& s : env_settings(env)) settings.push_back(std::move(s));
  return build(std::move(settings), base_dir, {});
}

config load_config(const fs::path& path, const env_map& env) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const error& e) {
    throw error(errc::config_error, "cannot read config " + path.string() + ": " + e.what());
  }
  auto base = fs::absolute(path).parent_path();
  auto c = parse_config(text, base, env);
  c.source = path;
  return c;
}

config default_config(const env_map& env) { return build(env_settings(env), fs::current_path(), {}); }

}  // namespace hostguard
