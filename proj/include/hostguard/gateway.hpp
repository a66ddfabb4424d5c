#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hostguard/bloomset.hpp"
#include "hostguard/geo.hpp"
#include "hostguard/net.hpp"
#include "hostguard/regex.hpp"
#include "hostguard/reputation.hpp"
#include "hostguard/signatures.hpp"
#include "hostguard/util.hpp"

namespace hostguard::gateway {

using param_list = std::vector<std::pair<std::string, std::string>>;

enum class login_outcome { success, failure };

struct upload_part {
  std::string field;
  std::string filename;
  std::uint64_t size = 0;
  std::string first_bytes;  // at most 256 bytes
};

inline constexpr std::size_t upload_prefix_bytes = 256;

/// One request as seen by the pipeline. Parameter values are kept raw
/// (still percent-encoded); decoding happens inside the stages.
struct request_record {
  net::ip_address source_ip;
  std::string method = "GET";
  std::string path = "/";
  param_list query_params;
  param_list body_params;
  param_list headers;
  std::vector<upload_part> uploads;
  timestamp_ms received_at = 0;
  /// Trace-only: outcome of a login attempt as reported by the origin.
  std::optional<login_outcome> login;

  std::string header(std::string_view name) const;
  /// Canonical JSON (sorted keys, no whitespace); one trace line.
  std::string to_json() const;
  /// Throws errc::invalid_request.
  static request_record from_json(std::string_view line);
};

/// `a=1&b=%2F` split on `&` and `=` with values left encoded.
param_list parse_query_string(std::string_view qs);

enum class decision { allow, challenge, block };
enum class stage {
  maintenance,
  reputation,
  geo,
  agent,
  blacklist,
  payload,
  inclusion,
  upload,
  login_rate,
  request_rate,
  clean
};

std::string_view to_string(decision d);
std::string_view to_string(stage s);

struct verdict {
  std::uint64_t seq = 0;
  decision dec = decision::allow;
  stage where = stage::clean;
  std::string reason_code;
  std::string request_id;  // 128 bits, hex
  std::vector<std::string> evidence;
  std::optional<std::string> challenge_id;
  timestamp_ms received_at = 0;
  std::string source_ip;
  std::string method;
  std::string path;

  std::string to_json() const;
};

enum class rate_scope { site_wide, per_ip };
enum class mode { production, maintenance };

struct policy {
  unsigned failed_login_threshold = 3;
  std::int64_t login_window_ms = 900'000;
  unsigned rate_threshold = 200;
  rate_scope scope = rate_scope::site_wide;
  std::vector<std::string> blocked_agent_patterns{"curl", "wget", "python-requests", "libwww"};
  std::set<std::string> banned_upload_extensions{"php", "php3", "php4", "php5", "phtml", "exe", "sh", "pl", "cgi"};
  std::set<std::string> blocked_countries;
  std::vector<std::string> crawler_allowlist;
  std::vector<std::string> dnsbl_zones;
  std::set<std::string> dnsbl_ipv6_zones;
  bool dnsbl_fail_open = true;
  int dnsbl_timeout_ms = 200;
  std::string maintenance_token;
  std::set<std::string> login_paths{"/wp-login.php", "/administrator/index.php", "/user/login", "/login.php"};
  signatures::severity payload_min_severity = signatures::severity::high;
  std::uint64_t blacklist_capacity = 100'000;
  double blacklist_fp_target = 0.001;
  std::int64_t reputation_cache_ms = 300'000;

  bool set(std::string_view key, std::string_view value);
  /// Checks invariants and compiles patterns; must run before use.
  void finalize();

  std::vector<regex> agent_regexes;
  std::vector<net::cidr> crawler_ranges;
};

/// Result of one stage: pass, or a decision with reason and evidence.
struct stage_outcome {
  bool pass = true;
  decision dec = decision::block;
  std::string reason;
  std::vector<std::string> evidence;

  static stage_outcome ok() { return {}; }
  static stage_outcome fail(decision d, std::string reason, std::vector<std::string> evidence = {}) {
    return {false, d, std::move(reason), std::move(evidence)};
  }
};

/// Throws errc::maintenance_token_unset in maintenance mode without a token.
stage_outcome maintenance_gate(const request_record& req, mode m, const policy& pol);
stage_outcome geo_allow(const net::ip_address& ip, const geo::range_table* table, const policy& pol);
stage_outcome agent_allowed(std::string_view user_agent, const policy& pol);
stage_outcome inclusion_check(const request_record& req);
stage_outcome inclusion_check_value(std::string_view name, std::string_view raw_value);
stage_outcome upload_check(const std::vector<upload_part>& parts, const policy& pol);
stage_outcome payload_check(const request_record& req, const signatures::signature_set& sigs, const policy& pol);

/// Lowercased, once-decoded path without query, digit runs folded to `#`.
std::string path_template(std::string_view path);
/// `ip|METHOD|template`
std::string blacklist_key(const request_record& req);

// ---------------------------------------------------------------------------
// challenge state
// ---------------------------------------------------------------------------
enum class challenge_trigger { none, failed_logins, rate };

struct challenge_decision {
  bool required = false;
  std::string kind = "captcha";
  std::string challenge_id;
  challenge_trigger trigger = challenge_trigger::none;
};

/// Per-IP failed-login counters over a sliding window.
class login_tracker {
 public:
  login_tracker(unsigned threshold, std::int64_t window_ms) : threshold_(threshold), window_ms_(window_ms) {}
  /// Whether an attempt at `t` must pass a challenge first.
  challenge_decision check(const std::string& ip, timestamp_ms t);
  /// Records an outcome and reports whether the next attempt is challenged.
  challenge_decision note_login(const std::string& ip, login_outcome outcome, timestamp_ms t);

 private:
  unsigned threshold_;
  std::int64_t window_ms_;
  std::mutex mu_;
  std::unordered_map<std::string, std::deque<timestamp_ms>> failures_;
};

/// Sliding one-second window counts.
class rate_limiter {
 public:
  explicit rate_limiter(unsigned threshold) : threshold_(threshold) {}
  /// Counts the request at `t` (window (t-1000, t]) and reports whether
  /// the count exceeds the threshold.
  challenge_decision note_rate(const std::string& key, timestamp_ms t);
  std::size_t count(const std::string& key) const;

 private:
  unsigned threshold_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::deque<timestamp_ms>> windows_;
};

class challenge_provider {
 public:
  virtual ~challenge_provider() = default;
  virtual std::string issue(const std::string& challenge_id) = 0;
  virtual bool verify(const std::string& challenge_id, const std::string& answer) = 0;
};

/// Deterministic provider for tests and replay: the expected answer is the
/// token returned by issue(), which is the challenge id reversed.
class echo_challenge : public challenge_provider {
 public:
  std::string issue(const std::string& challenge_id) override;
  bool verify(const std::string& challenge_id, const std::string& answer) override;

 private:
  std::mutex mu_;
  std::set<std::string> open_;
};

// ---------------------------------------------------------------------------
// blacklist
// ---------------------------------------------------------------------------
/// Bloom filter in front of an exact key set. The Bloom filter is a
/// negative fast path only; a positive is confirmed against the exact set.
/// With a store path, marks and unmarks are appended to a JSON-lines file
/// and changes made by other processes are picked up on lookup.
class blacklist {
 public:
  blacklist(std::uint64_t capacity, double fp_target, fs::path store = {});

  void mark(const std::string& key, timestamp_ms at = 0);
  bool hit(const std::string& key);
  /// Removes every key for the address; returns how many were removed.
  std::size_t unblock_ip(const std::string& ip, timestamp_ms at = 0);
  bool contains_exact(const std::string& key) const;

  std::uint64_t exact_lookups() const { return exact_lookups_.load(); }
  std::size_t size() const;
  std::uint64_t epoch() const { return epoch_.load(); }
  const bloom_set& filter() const { return bloom_; }

  /// Test hook: makes persistence fail as if the store were unreachable.
  bool simulate_store_failure = false;

 private:
  void rotate_locked();
  void refresh_locked();
  void append(const std::string& op, const std::string& key, timestamp_ms at);

  std::uint64_t capacity_;
  double fp_target_;
  fs::path store_;
  std::uintmax_t store_offset_ = 0;
  mutable std::shared_mutex mu_;
  bloom_set bloom_;
  std::unordered_set<std::string> exact_;
  std::atomic<std::uint64_t> exact_lookups_{0};
  std::atomic<std::uint64_t> epoch_{0};
};

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------
struct gateway_deps {
  const signatures::signature_set* sigs = nullptr;
  const geo::range_table* geo = nullptr;
  std::vector<reputation::resolver*> resolvers;
  blacklist* list = nullptr;
  challenge_provider* challenges = nullptr;
  /// Receives warnings (resolver failures and similar).
  std::function<void(const std::string&)> warn;
  /// Receives every non-allow verdict (the block log).
  std::function<void(const verdict&)> block_log;
};

class gateway {
 public:
  gateway(policy pol, gateway_deps deps, mode m = mode::production);

  /// Runs the stages in fixed order; the first failing stage decides.
  verdict evaluate(const request_record& req);
  /// Login outcome reported by the origin after an allowed attempt.
  challenge_decision note_login(const net::ip_address& ip, login_outcome outcome, timestamp_ms t);
  bool is_login_attempt(const request_record& req) const;

  void set_mode(mode m) { mode_.store(m); }
  mode current_mode() const { return mode_.load(); }
  const policy& active_policy() const { return pol_; }
  rate_limiter& rates() { return rates_; }
  login_tracker& logins() { return logins_; }

 private:
  stage_outcome reputation_stage(const request_record& req);
  bool challenge_solved(const request_record& req);

  policy pol_;
  gateway_deps deps_;
  std::atomic<mode> mode_;
  std::atomic<std::uint64_t> seq_{0};
  rate_limiter rates_;
  login_tracker logins_;
  std::mutex cache_mu_;
  std::map<std::pair<std::string, std::size_t>, std::pair<timestamp_ms, std::vector<reputation::result>>> rep_cache_;
};

/// Evaluates every line of a JSON-lines trace in order, feeding recorded
/// login outcomes back, and returns the verdict log.
std::string replay(std::string_view trace, gateway& gw, std::vector<verdict>* out = nullptr);

std::string human_reason(std::string_view reason_code);
/// Warning page for a non-allow verdict; throws errc::precondition_violated
/// for allow.
std::string render_warning(const verdict& v);

}  // namespace hostguard::gateway
