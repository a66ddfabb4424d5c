#include "hostguard/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "cli_internal.hpp"
#include "hostguard/error.hpp"
#include "hostguard/integrity.hpp"
#include "hostguard/sitemap.hpp"

extern char** environ;

namespace hostguard {

using json = nlohmann::json;

namespace cli_detail {

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_stop_signal(int) { g_stop.store(true); }
struct sigaction g_old_int, g_old_term;
}  // namespace

std::atomic<bool>& stop_requested() { return g_stop; }

signal_scope::signal_scope() {
  g_stop.store(false);
  struct sigaction sa {};
  sa.sa_handler = on_stop_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, &g_old_int);
  sigaction(SIGTERM, &sa, &g_old_term);
}

signal_scope::~signal_scope() {
  sigaction(SIGINT, &g_old_int, nullptr);
  sigaction(SIGTERM, &g_old_term, nullptr);
}

std::unique_ptr<gateway_runtime> make_gateway(const config& c, gateway::mode m, bool live, std::ostream& err,
                                              std::function<void(const gateway::verdict&)> block_log) {
  auto rt = std::make_unique<gateway_runtime>();
  if (!c.signature_path.empty()) rt->sigs = signatures::load_signatures(c.signature_path);
  if (!c.geo_table_path.empty()) rt->geo = geo::range_table::load(c.geo_table_path);
  if (!c.reputation_fixture.empty()) rt->resolvers.push_back(reputation::fixture_resolver::load(c.reputation_fixture));
  if (live && !c.dns_server.empty() && !c.gateway.dnsbl_zones.empty()) {
    auto ep = reputation::parse_endpoint(c.dns_server);
    if (!ep) throw error(errc::config_error, "gateway.dns_server does not parse: " + c.dns_server);
    rt->resolvers.push_back(std::make_unique<reputation::dnsbl_resolver>(
        *ep, c.gateway.dnsbl_zones, c.gateway.dnsbl_ipv6_zones, c.gateway.dnsbl_timeout_ms, c.gateway.dnsbl_fail_open));
  }
  rt->list = std::make_unique<gateway::blacklist>(c.gateway.blacklist_capacity, c.gateway.blacklist_fp_target,
                                                  live ? c.blacklist_store : fs::path{});
  gateway::gateway_deps deps;
  deps.sigs = c.signature_path.empty() ? nullptr : &rt->sigs;
  deps.geo = rt->geo ? &*rt->geo : nullptr;
  for (auto& r : rt->resolvers) deps.resolvers.push_back(r.get());
  deps.list = rt->list.get();
  deps.challenges = &rt->challenges;
  deps.warn = [&err](const std::string& w) { err << "warning: " << w << "\n"; };
  deps.block_log = std::move(block_log);
  rt->gw = std::make_unique<gateway::gateway>(c.gateway, std::move(deps), m);
  return rt;
}

}  // namespace cli_detail

namespace {

using namespace cli_detail;

void need(const fs::path& p, const char* what) {
  if (p.empty()) throw error(errc::config_error, std::string(what) + " is not configured");
}

std::vector<std::string> nonblank_lines(const std::string& text) {
  std::vector<std::string> out;
  for (auto& l : split(text, '\n'))
    if (!trim(l).empty()) out.push_back(l);
  return out;
}

std::string read_optional(const fs::path& p) {
  std::error_code ec;
  if (p.empty() || !fs::exists(p, ec)) return {};
  return read_file(p);
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------
int cmd_baseline(const config& c, bool yes, const std::string& cms, const std::string& version, std::ostream& out,
                 std::ostream& err, std::istream& in) {
  need(c.web_root, "paths.web_root");
  need(c.manifest_path, "paths.manifest");
  if (!yes) {
    out << "Record " << c.web_root.string() << " as the trusted baseline? [y/N] " << std::flush;
    std::string answer;
    std::getline(in, answer);
    answer = to_lower(trim(answer));
    if (answer != "y" && answer != "yes") {
      err << "aborted: baseline not confirmed (pass --yes to skip the prompt)\n";
      return exit_error;
    }
  }
  integrity::baseline_options opts;
  opts.cms_name = cms;
  opts.cms_version = version;
  if (!c.sitemap.empty()) opts.sitemap_document = read_file(c.sitemap);
  auto m = integrity::build_baseline(c.web_root, opts);
  integrity::save_manifest(c.manifest_path, m);
  out << "manifest " << c.manifest_path.string() << "\n"
      << "entries " << m.entries.size() << "\n"
      << "digest " << m.manifest_digest << "\n";
  return exit_clean;
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------
int cmd_scan(const config& c, bool quarantine, fs::path report_path, std::ostream& out) {
  need(c.web_root, "paths.web_root");
  need(c.manifest_path, "paths.manifest");
  need(c.signature_path, "paths.signatures");
  auto manifest = integrity::load_manifest(c.manifest_path);
  auto sigs = signatures::load_signatures(c.signature_path);
  auto rep = integrity::verify_tree(c.web_root, manifest);

  std::set<std::string> suspects(rep.modified.begin(), rep.modified.end());
  suspects.insert(rep.added.begin(), rep.added.end());
  suspects.insert(rep.unknown_unhashed.begin(), rep.unknown_unhashed.end());
  auto scan = signatures::scan_files(c.web_root, {suspects.begin(), suspects.end()}, sigs);

  out << "modified " << rep.modified.size() << "\n"
      << "added " << rep.added.size() << "\n"
      << "removed " << rep.removed.size() << "\n"
      << "permission_drift " << rep.permissions_drift.size() << "\n"
      << "scanned " << scan.files_scanned << "\n"
      << "hits " << scan.hits.size() << "\n";
  for (const auto& p : rep.modified) out << "  modified " << p << "\n";
  for (const auto& p : rep.added) out << "  added " << p << "\n";
  for (const auto& p : rep.removed) out << "  removed " << p << "\n";
  for (const auto& d : rep.permissions_drift)
    out << "  mode " << d.rel_path << " " << mode_to_octal(d.expected_mode) << " -> " << mode_to_octal(d.found_mode)
        << "\n";
  std::map<std::string, std::vector<const signatures::signature_hit*>> by_file;
  for (const auto& h : scan.hits) {
    out << "  hit " << h.file_path << " @" << h.byte_offset << " " << h.signature_id << " "
        << signatures::to_string(h.klass) << " " << signatures::to_string(h.level) << "\n";
    by_file[h.file_path].push_back(&h);
  }

  if (quarantine) {
    need(c.quarantine_dir, "paths.quarantine_dir");
    integrity::quarantine_store store(c.quarantine_dir);
    for (const auto& [file, hits] : by_file) {
      std::set<std::string> critical;
      for (auto* h : hits)
        if (h->level == signatures::severity::critical) critical.insert(h->signature_id);
      if (critical.empty()) continue;
      auto e = store.quarantine_file(c.web_root / file, integrity::quarantine_reason::signature_hit,
                                     "signatures=" + join({critical.begin(), critical.end()}, ","));
      out << "quarantined " << file << " as q-" << e.entry_id << "\n";
    }
  }

  if (report_path.empty() && !c.state_dir.empty()) report_path = c.state_dir / "scan-report.jsonl";
  if (!report_path.empty()) {
    write_file_atomic(report_path, rep.to_json() + "\n" + scan.to_jsonl());
    out << "report " << report_path.string() << "\n";
  }
  return rep.clean() && scan.hits.empty() ? exit_clean : exit_findings;
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------
int cmd_audit(const config& c, const fs::path& emit_dir, std::ostream& out) {
  if (c.php_ini.empty() && c.web_root.empty() && c.credentials.empty())
    throw error(errc::config_error, "nothing to audit: set paths.php_ini, paths.web_root or paths.credentials");
  std::vector<hardening::finding> findings;
  auto add = [&](std::vector<hardening::finding> f) { findings.insert(findings.end(), f.begin(), f.end()); };
  if (!c.php_ini.empty()) add(hardening::audit_runtime_config(read_file(c.php_ini), c.hardening));
  if (!c.web_root.empty()) add(hardening::audit_filesystem(c.web_root, c.hardening));
  if (!c.credentials.empty()) add(hardening::audit_credentials(read_file(c.credentials), c.hardening));

  out << std::left << std::setw(10) << "SEVERITY" << std::setw(16) << "CATEGORY" << std::setw(40) << "FINDING"
      << "OBSERVED -> EXPECTED\n";
  for (const auto& f : findings)
    out << std::setw(10) << signatures::to_string(f.level) << std::setw(16) << hardening::to_string(f.cat)
        << std::setw(40) << f.finding_id << f.observed << " -> " << f.expected << "\n";
  out << findings.size() << " findings\n";

  if (!emit_dir.empty()) {
    auto b = hardening::emit_remediation(findings);
    fs::create_directories(emit_dir);
    write_file_atomic(emit_dir / "php-overrides.ini", b.runtime_overrides);
    write_file_atomic(emit_dir / "htaccess", b.access_rules);
    std::string steps;
    for (const auto& s : b.manual_steps) steps += s + "\n";
    write_file_atomic(emit_dir / "manual-steps.txt", steps);
    out << "remediation written to " << emit_dir.string() << "\n";
  }
  return findings.empty() ? exit_clean : exit_findings;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------
int cmd_replay(const config& c, const fs::path& trace_path, const fs::path& golden, const fs::path& out_path,
               const fs::path& block_log, std::ostream& out, std::ostream& err) {
  auto trace = read_file(trace_path);
  std::function<void(const gateway::verdict&)> sink;
  if (!block_log.empty()) sink = [block_log](const gateway::verdict& v) { append_line_durable(block_log, v.to_json()); };
  auto rt = make_gateway(c, gateway::mode::production, false, err, sink);
  auto log = gateway::replay(trace, *rt->gw);
  if (out_path.empty()) out << log;
  else write_file_atomic(out_path, log);
  if (golden.empty()) return exit_clean;

  auto want = read_file(golden);
  if (want == log) {
    err << "verdict log matches " << golden.string() << "\n";
    return exit_clean;
  }
  auto a = split(want, '\n'), b = split(log, '\n');
  std::size_t i = 0;
  while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
  err << "verdict log differs from " << golden.string() << " at line " << i + 1 << "\n"
      << "  expected: " << (i < a.size() ? a[i] : "<end of file>") << "\n"
      << "  actual:   " << (i < b.size() ? b[i] : "<end of file>") << "\n";
  return exit_findings;
}

// ---------------------------------------------------------------------------
// monitor
// ---------------------------------------------------------------------------
struct monitor_run {
  const config& c;
  std::ostream& out;
  std::ostream& err;
  monitor::decision_tree tree;
  std::optional<integrity::baseline_manifest> manifest;
  std::set<std::string> core_paths;
  std::vector<std::unique_ptr<monitor::alert_sink>> sinks;
  monitor::dispatch_options dispatch;
  std::size_t alerts = 0;
  fs::file_time_type sitemap_seen{};

  monitor_run(const config& cfg, std::ostream& o, std::ostream& e) : c(cfg), out(o), err(e) {
    need(c.alerts_log, "paths.alerts_log");
    tree = c.tree_path.empty() ? monitor::builtin_tree(c.thresholds)
                               : monitor::decision_tree::from_json(read_file(c.tree_path));
    std::error_code ec;
    if (!c.manifest_path.empty() && fs::exists(c.manifest_path, ec)) {
      manifest = integrity::load_manifest(c.manifest_path);
      for (const auto& [rel, entry] : manifest->entries) core_paths.insert(rel);
    }
    sinks.push_back(std::make_unique<monitor::file_sink>(c.alerts_log));
    if (!c.smtp_spool.empty())
      sinks.push_back(std::make_unique<monitor::smtp_spool_sink>(c.smtp_spool, c.mail_from, c.mail_to));
    dispatch.max_retries = c.max_retries;
    dispatch.base_backoff = std::chrono::milliseconds(c.backoff_ms);
    dispatch.dead_letter = c.dead_letter;
  }

  void raise(const monitor::alert& a) {
    ++alerts;
    out << "ALERT " << signatures::to_string(a.level) << " " << monitor::to_string(a.cat) << " " << a.subject << ": "
        << a.detail << "\n";
    for (auto& s : sinks) {
      auto r = monitor::dispatch_alert(a, *s, dispatch);
      if (!r.delivered)
        err << "warning: " << s->name() << " failed after " << r.retry_count << " retries (" << r.last_error
            << "); alert " << a.alert_id << " dead-lettered\n";
    }
  }

  void process(const std::vector<monitor::event>& events) {
    if (events.empty()) return;
    auto fvs = monitor::window_features(events, c.window_s, c.grouping, manifest ? &core_paths : nullptr);
    for (const auto& a : monitor::classify_windows(tree, fvs)) raise(a);
    if (manifest)
      for (const auto& a : monitor::core_touch_alerts(events, *manifest)) raise(a);
  }

  void check_sitemap() {
    if (c.sitemap.empty() || !manifest || !manifest->sitemap_urls) return;
    std::error_code ec;
    auto mtime = fs::last_write_time(c.sitemap, ec);
    if (ec || mtime == sitemap_seen) return;
    sitemap_seen = mtime;
    auto r = monitor::sitemap_drift(read_file(c.sitemap), *manifest->sitemap_urls, c.sitemap_threshold);
    if (r.flagged)
      raise(monitor::drift_alert(r, c.sitemap_url.empty() ? c.sitemap.string() : c.sitemap_url, now_ms()));
  }

  void report_skips(const monitor::ingest_report& r, std::size_t line_base) {
    for (const auto& s : r.skipped)
      err << "warning: event log line " << s.line + line_base << " skipped: " << s.reason << "\n";
  }
};

int cmd_monitor_once(monitor_run& run, const fs::path& log) {
  auto r = monitor::ingest_file(log);
  run.report_skips(r, 0);
  run.process(r.events);
  run.check_sitemap();
  run.out << r.events.size() << " events, " << r.skipped.size() << " skipped, " << run.alerts << " alerts\n";
  return run.alerts ? exit_findings : exit_clean;
}

// Tails the log. Windows are evaluated once a later event shows they have
// closed; whatever is pending is evaluated on shutdown.
int cmd_monitor_follow(monitor_run& run, const fs::path& log, int poll_ms) {
  signal_scope signals;
  std::uintmax_t offset = 0;
  std::size_t lines_seen = 0;
  std::string partial;
  std::vector<monitor::event> pending;
  const std::int64_t len_ms = run.c.window_s * 1000;
  {
    std::ifstream probe(log);
    if (!probe) throw error(errc::stream_unreadable, "cannot open " + log.string());
  }
  run.out << "following " << log.string() << "\n" << std::flush;
  while (true) {
    bool stopping = stop_requested().load();
    std::ifstream in(log, std::ios::binary);
    if (in) {
      in.seekg(0, std::ios::end);
      auto size = static_cast<std::uintmax_t>(in.tellg());
      if (size < offset) offset = 0;  // truncated or rotated
      in.seekg(static_cast<std::streamoff>(offset));
      std::string chunk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      offset += chunk.size();
      partial += chunk;
    }
    auto cut = partial.rfind('\n');
    if (cut != std::string::npos) {
      auto r = monitor::ingest(std::string_view(partial).substr(0, cut + 1));
      run.report_skips(r, lines_seen);
      lines_seen += static_cast<std::size_t>(std::count(partial.begin(), partial.begin() + static_cast<long>(cut) + 1, '\n'));
      partial.erase(0, cut + 1);
      pending.insert(pending.end(), r.events.begin(), r.events.end());
      std::stable_sort(pending.begin(), pending.end(),
                       [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    }
    if (!pending.empty()) {
      auto latest = pending.back().timestamp;
      timestamp_ms open_from = stopping ? latest + len_ms : latest - (((latest % len_ms) + len_ms) % len_ms);
      auto split_at = std::partition_point(pending.begin(), pending.end(),
                                           [&](const auto& e) { return e.timestamp < open_from; });
      std::vector<monitor::event> closed(pending.begin(), split_at);
      pending.erase(pending.begin(), split_at);
      run.process(closed);
    }
    run.check_sitemap();
    run.out << std::flush;
    if (stopping) break;
    for (int waited = 0; waited < poll_ms && !stop_requested().load(); waited += 20)
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  run.out << "stopped after " << lines_seen << " lines, " << run.alerts << " alerts\n";
  return exit_clean;
}

// ---------------------------------------------------------------------------
// review
// ---------------------------------------------------------------------------
struct review_item {
  std::string source;
  std::string id;
  std::string summary;
  std::string created_at;
  std::string status;
  std::string raw;
};

std::vector<review_item> review_items(const config& c, std::optional<integrity::quarantine_store>& store) {
  std::vector<review_item> items;
  std::error_code ec;
  if (!c.quarantine_dir.empty() && fs::exists(c.quarantine_dir, ec)) {
    store.emplace(c.quarantine_dir);
    for (const auto& e : store->entries()) {
      if (e.status != integrity::quarantine_status::held) continue;
      items.push_back({"quarantine", "q-" + std::to_string(e.entry_id),
                       std::string(integrity::to_string(e.reason)) + " " + e.original_path, format_utc(e.created_at),
                       std::string(integrity::to_string(e.status)), e.detail});
    }
  }
  for (const auto& line : nonblank_lines(read_optional(c.block_log))) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    items.push_back({"blocked_request", "b-" + j.value("request_id", ""),
                     j.value("decision", "") + " " + j.value("stage", "") + "/" + j.value("reason_code", "") + " " +
                         j.value("source_ip", "") + " " + j.value("method", "") + " " + j.value("path", ""),
                     j.value("received_at", ""), "logged", line});
  }
  for (const auto& line : nonblank_lines(read_optional(c.alerts_log))) {
    try {
      auto a = monitor::alert::from_json(line);
      items.push_back({"alert", a.alert_id, std::string(monitor::to_string(a.cat)) + " " + a.subject,
                       format_utc(a.window_end), "open", line});
    } catch (const error&) {
    }
  }
  return items;
}

std::optional<std::uint64_t> quarantine_id(const std::string& id) {
  if (!id.starts_with("q-")) return std::nullopt;
  try {
    std::size_t used = 0;
    auto n = std::stoull(id.substr(2), &used);
    if (used != id.size() - 2) return std::nullopt;
    return n;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

int cmd_review(const config& c, const std::string& action, const std::string& arg, std::ostream& out,
               std::ostream& err) {
  if (action == "unblock") {
    need(c.blacklist_store, "paths.blacklist_store");
    auto ip = net::parse_ip(arg);
    if (!ip) throw error(errc::invalid_address, arg);
    gateway::blacklist list(c.gateway.blacklist_capacity, c.gateway.blacklist_fp_target, c.blacklist_store);
    auto n = list.unblock_ip(ip->to_string(), now_ms());
    if (n == 0) {
      err << arg << " not found in the blacklist\n";
      return exit_findings;
    }
    out << "unblocked " << ip->to_string() << " (" << n << " keys)\n";
    return exit_clean;
  }

  std::optional<integrity::quarantine_store> store;
  auto items = review_items(c, store);
  if (action == "list") {
    for (const auto& i : items)
      out << std::left << std::setw(16) << i.source << std::setw(40) << i.id << std::setw(26) << i.created_at
          << std::setw(8) << i.status << i.summary << "\n";
    std::map<std::string, std::size_t> by_status;
    if (store)
      for (const auto& e : store->entries()) ++by_status[std::string(integrity::to_string(e.status))];
    out << items.size() << " items; quarantine held " << by_status["held"] << " restored " << by_status["restored"]
        << " purged " << by_status["purged"] << "\n";
    return exit_clean;
  }
  if (arg.empty()) throw error(errc::config_error, action + " needs an id");
  if (action == "show") {
    for (const auto& i : items)
      if (i.id == arg) {
        out << "source " << i.source << "\nid " << i.id << "\nstatus " << i.status << "\ncreated_at " << i.created_at
            << "\nsummary " << i.summary << "\n" << i.raw << "\n";
        return exit_clean;
      }
    err << arg << " not found\n";
    return exit_findings;
  }
  auto qid = quarantine_id(arg);
  if (!qid || !store) {
    err << arg << " is not a quarantine entry\n";
    return exit_findings;
  }
  try {
    if (action == "release") {
      out << "restored " << store->restore_file(*qid).string() << "\n";
    } else {
      auto e = store->purge(*qid);
      out << "purged q-" << e.entry_id << " " << e.original_path << "\n";
    }
  } catch (const error& e) {
    if (e.code() != errc::unknown_entry && e.code() != errc::not_held) throw;
    err << arg << " not found or not held: " << e.what() << "\n";
    return exit_findings;
  }
  return exit_clean;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------
const char* const report_checklist[] = {
    "Confirm every quarantined file was released or purged",
    "Re-run scan against the baseline and confirm a clean result",
    "Request a review from the anti-phishing and safe-browsing services that flagged the site",
    "Request reindexing of the cleaned sitemap from the search engines",
    "Rotate administrator and database credentials",
};

int cmd_report(const config& c, const std::string& since, const std::string& now_text, fs::path out_dir,
               std::ostream& out) {
  timestamp_ms now = now_ms();
  if (!now_text.empty()) {
    auto t = parse_utc(now_text);
    if (!t) throw error(errc::config_error, "--now must look like 2026-01-02T03:04:05Z");
    now = *t;
  }
  std::optional<timestamp_ms> from;
  if (!since.empty()) {
    auto d = parse_duration_ms(since);
    if (!d) throw error(errc::config_error, "--since expects a duration such as 90m, 1h or 7d");
    from = now - *d;
  }
  static const gateway::stage stages[] = {gateway::stage::maintenance, gateway::stage::blacklist,
                                          gateway::stage::reputation,  gateway::stage::geo,
                                          gateway::stage::agent,       gateway::stage::inclusion,
                                          gateway::stage::payload,     gateway::stage::upload,
                                          gateway::stage::login_rate,  gateway::stage::request_rate};
  std::map<std::string, std::size_t> by_stage, by_decision{{"block", 0}, {"challenge", 0}}, by_ip, by_category;
  for (auto s : stages) by_stage[std::string(gateway::to_string(s))] = 0;
  for (auto cat : {monitor::alert_category::resource_abuse, monitor::alert_category::mail_storm,
                   monitor::alert_category::core_tamper, monitor::alert_category::sitemap_drift,
                   monitor::alert_category::link_farm})
    by_category[std::string(monitor::to_string(cat))] = 0;
  struct minute_counts {
    std::size_t blocks = 0, challenges = 0, alerts = 0;
  };
  std::map<timestamp_ms, minute_counts> minutes;
  std::size_t unreadable = 0;

  for (const auto& line : nonblank_lines(read_optional(c.block_log))) {
    json j = json::parse(line, nullptr, false);
    std::optional<timestamp_ms> t;
    if (j.is_object()) t = parse_utc(j.value("received_at", ""));
    if (!t) {
      ++unreadable;
      continue;
    }
    if (from && *t < *from) continue;
    auto dec = j.value("decision", "");
    if (dec != "block" && dec != "challenge") continue;
    ++by_decision[dec];
    ++by_stage[j.value("stage", "")];
    ++by_ip[j.value("source_ip", "")];
    auto& m = minutes[*t / 60'000 * 60'000];
    (dec == "block" ? m.blocks : m.challenges)++;
  }
  for (const auto& line : nonblank_lines(read_optional(c.alerts_log))) {
    try {
      auto a = monitor::alert::from_json(line);
      if (from && a.window_end < *from) continue;
      ++by_category[std::string(monitor::to_string(a.cat))];
      ++minutes[a.window_end / 60'000 * 60'000].alerts;
    } catch (const error&) {
      ++unreadable;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> offenders(by_ip.begin(), by_ip.end());
  std::stable_sort(offenders.begin(), offenders.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (offenders.size() > 10) offenders.resize(10);

  out << "Blocks by stage" << (since.empty() ? "" : " (last " + since + ")") << "\n";
  for (const auto& [s, n] : by_stage) out << "  " << std::left << std::setw(16) << s << n << "\n";
  out << "Decisions\n";
  for (const auto& [d, n] : by_decision) out << "  " << std::setw(16) << d << n << "\n";
  out << "Top offender IPs\n";
  if (offenders.empty()) out << "  (none)\n";
  for (const auto& [ip, n] : offenders) out << "  " << std::setw(40) << ip << n << "\n";
  out << "Alerts by category\n";
  for (const auto& [cat, n] : by_category) out << "  " << std::setw(16) << cat << n << "\n";
  if (unreadable) out << unreadable << " unreadable log lines ignored\n";
  out << "After cleanup\n";
  for (const char* step : report_checklist) out << "  [ ] " << step << "\n";

  if (out_dir.empty()) out_dir = c.state_dir.empty() ? fs::path("report") : c.state_dir / "report";
  fs::create_directories(out_dir);
  json summary;
  summary["generated_at"] = format_utc(now);
  if (from) summary["since"] = format_utc(*from);
  summary["blocks_by_stage"] = by_stage;
  summary["decisions"] = by_decision;
  summary["top_offenders"] = json::array();
  for (const auto& [ip, n] : offenders) summary["top_offenders"].push_back({{"ip", ip}, {"count", n}});
  summary["alerts_by_category"] = by_category;
  summary["unreadable_lines"] = unreadable;
  summary["checklist"] = report_checklist;
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  std::string csv = "minute_utc,blocks,challenges,alerts\n";
  for (const auto& [m, n] : minutes)
    csv += format_utc(m) + "," + std::to_string(n.blocks) + "," + std::to_string(n.challenges) + "," +
           std::to_string(n.alerts) + "\n";
  write_file_atomic(out_dir / "per_minute.csv", csv);
  out << "summary " << (out_dir / "summary.json").string() << "\n"
      << "csv " << (out_dir / "per_minute.csv").string() << "\n";
  return exit_clean;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
int cmd_train(const config& c, std::size_t n, std::uint64_t seed, const fs::path& data, unsigned depth,
              std::size_t min_leaf, const fs::path& out_path, std::ostream& out, std::ostream& err) {
  std::vector<monitor::sample> samples;
  if (data.empty()) {
    samples = monitor::synthetic_samples(n, seed, c.thresholds);
  } else {
    // {"features": {"name": value, ...}, "label": "..."} per line
    std::size_t line_no = 0;
    for (const auto& line : split(read_file(data), '\n')) {
      ++line_no;
      if (trim(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("features") || !j["features"].is_object() || !j.contains("label") ||
          !j["label"].is_string())
        throw error(errc::insufficient_data, data.string() + " line " + std::to_string(line_no) + " is not a sample");
      monitor::sample s;
      s.x.assign(monitor::feature_count, std::nan(""));
      for (auto it = j["features"].begin(); it != j["features"].end(); ++it) {
        auto idx = monitor::feature_index(it.key());
        if (!idx || !it.value().is_number())
          throw error(errc::missing_feature, data.string() + " line " + std::to_string(line_no) + ": " + it.key());
        s.x[*idx] = it.value().get<double>();
      }
      s.label = j["label"].get<std::string>();
      samples.push_back(std::move(s));
    }
  }
  std::vector<std::string> warnings;
  auto tree = monitor::train_tree(samples, {depth, min_leaf}, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  write_file_atomic(out_path, tree.to_json() + "\n");
  out << samples.size() << " samples, " << tree.nodes.size() << " nodes\n" << tree.describe();
  return exit_clean;
}

}  // namespace

env_map process_env() {
  env_map env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    if (!kv.starts_with("HOSTGUARD_")) continue;
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return env;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in,
            const env_map& env) {
  CLI::App app{"hostguard: integrity, hardening, request filtering and behavior monitoring for hosted web sites",
               "hostguard"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config,-c", config_path, "ini configuration (default: $HOSTGUARD_CONFIG)");
  app.footer("Exit codes: 0 clean, 1 findings, 2 error.");

  bool yes = false;
  std::string cms = "cms", cms_version = "0";
  auto* baseline = app.add_subcommand("baseline", "Hash the trusted web root into the manifest");
  baseline->add_flag("--yes,-y", yes, "Do not ask for confirmation");
  baseline->add_option("--cms", cms, "CMS name recorded in the manifest");
  baseline->add_option("--cms-version", cms_version, "CMS version recorded in the manifest");

  bool quarantine = false;
  std::string report_path;
  auto* scan = app.add_subcommand("scan", "Verify the tree against the manifest and scan changed files");
  scan->add_flag("--quarantine", quarantine, "Quarantine files with critical signature hits");
  scan->add_option("--report", report_path, "Report file (default: <state_dir>/scan-report.jsonl)");
  scan->add_flag("--yes,-y", yes, "Accepted for symmetry; scan never prompts");

  std::string emit_dir;
  auto* audit = app.add_subcommand("audit", "Audit runtime config, permissions and credentials");
  audit->add_option("--emit-remediation", emit_dir, "Directory for php-overrides.ini, htaccess, manual-steps.txt");
  audit->add_flag("--yes,-y", yes, "Accepted for symmetry; audit never prompts");

  std::string serve_mode, listen, upstream;
  auto* serve = app.add_subcommand("serve", "Run the filtering reverse proxy");
  serve->add_option("--mode", serve_mode, "production or maintenance")->check(CLI::IsMember({"production", "maintenance"}));
  serve->add_option("--listen", listen, "addr:port to listen on (port 0 picks one)");
  serve->add_option("--upstream", upstream, "addr:port of the origin server");
  serve->add_flag("--yes,-y", yes, "Accepted for symmetry; serve never prompts");

  std::string trace, golden, replay_out, replay_blocks;
  auto* replay = app.add_subcommand("replay", "Evaluate a recorded request trace offline");
  replay->add_option("trace", trace, "JSON-lines request trace")->required();
  replay->add_option("--golden", golden, "Expected verdict log; exit 1 on any difference");
  replay->add_option("--out", replay_out, "Write the verdict log here instead of stdout");
  replay->add_option("--block-log", replay_blocks, "Append non-allow verdicts here");
  replay->add_flag("--yes,-y", yes, "Accepted for symmetry; replay never prompts");

  bool once = false, follow = false;
  std::string event_log;
  int poll_ms = 1000;
  auto* mon = app.add_subcommand("monitor", "Window the behavior log, classify it and dispatch alerts");
  auto* once_flag = mon->add_flag("--once", once, "One pass over the log (default)");
  mon->add_flag("--follow", follow, "Tail the log until SIGINT/SIGTERM")->excludes(once_flag);
  mon->add_option("--log", event_log, "Event log (default: paths.event_log)");
  mon->add_option("--poll-ms", poll_ms, "Polling interval for --follow")->check(CLI::Range(20, 600000));
  mon->add_flag("--yes,-y", yes, "Accepted for symmetry; monitor never prompts");

  std::string action, target;
  auto* review = app.add_subcommand("review", "list | show <id> | release <id> | purge <id> | unblock <ip>");
  review->add_option("action", action, "list, show, release, purge or unblock")
      ->required()
      ->check(CLI::IsMember({"list", "show", "release", "purge", "unblock"}));
  review->add_option("id", target, "Review item id (q-N, b-..., al-...) or IP address");
  review->add_flag("--yes,-y", yes, "Accepted for symmetry; review never prompts");

  std::string since, now_text, report_dir;
  auto* report = app.add_subcommand("report", "Summarize block and alert logs");
  report->add_option("--since", since, "Only records newer than this (90m, 1h, 7d)");
  report->add_option("--now", now_text, "Reference time for --since (default: current time)");
  report->add_option("--out", report_dir, "Directory for summary.json and per_minute.csv");
  report->add_flag("--yes,-y", yes, "Accepted for symmetry; report never prompts");
  report->footer(
      "per_minute.csv columns: minute_utc (ISO-8601 start of the minute), blocks, challenges, alerts.\n"
      "summary.json holds the same tables as the console output.");

  std::size_t train_n = 1000, min_leaf = 1;
  std::uint64_t seed = 1;
  unsigned depth = 6;
  std::string train_data, train_out;
  auto* train = app.add_subcommand("train", "Train a decision tree for the monitor");
  train->add_option("--samples", train_n, "Synthetic samples to draw when --data is not given");
  train->add_option("--seed", seed, "Seed for the synthetic generator");
  train->add_option("--data", train_data, "JSON lines of {\"features\":{...},\"label\":...}");
  train->add_option("--max-depth", depth, "Maximum tree depth");
  train->add_option("--min-leaf", min_leaf, "Minimum samples per leaf")->check(CLI::PositiveNumber);
  train->add_option("--out", train_out, "Where to write the tree JSON")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? exit_clean : exit_error;
  }

  try {
    if (config_path.empty())
      if (auto it = env.find("HOSTGUARD_CONFIG"); it != env.end()) config_path = it->second;
    config c = config_path.empty() ? default_config(env) : load_config(config_path, env);

    if (*baseline) return cmd_baseline(c, yes, cms, cms_version, out, err, in);
    if (*scan) return cmd_scan(c, quarantine, report_path, out);
    if (*audit) return cmd_audit(c, emit_dir, out);
    if (*serve) {
      serve_options o;
      o.listen = listen.empty() ? c.listen : listen;
      o.upstream = upstream.empty() ? c.upstream : upstream;
      o.mode = serve_mode.empty() ? c.mode : serve_mode == "maintenance" ? gateway::mode::maintenance
                                                                          : gateway::mode::production;
      return cmd_serve(c, o, out, err);
    }
    if (*replay) return cmd_replay(c, trace, golden, replay_out, replay_blocks, out, err);
    if (*mon) {
      fs::path log = event_log.empty() ? c.event_log : fs::path(event_log);
      need(log, "paths.event_log");
      monitor_run run(c, out, err);
      return follow ? cmd_monitor_follow(run, log, poll_ms) : cmd_monitor_once(run, log);
    }
    if (*review) return cmd_review(c, action, target, out, err);
    if (*report) return cmd_report(c, since, now_text, report_dir, out);
    if (*train) return cmd_train(c, train_n, seed, train_data, depth, min_leaf, train_out, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
  return exit_error;
}

}  // namespace hostguard
