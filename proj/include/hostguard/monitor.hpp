#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hostguard/integrity.hpp"
#include "hostguard/signatures.hpp"
#include "hostguard/util.hpp"

namespace hostguard::monitor {

// ---------------------------------------------------------------------------
// events
// ---------------------------------------------------------------------------
enum class event_kind { script_exec, outbound_msg, file_touch, link_created };
enum class protocol { smtp, http, dns, other };

std::string_view to_string(event_kind k);
std::string_view to_string(protocol p);

/// One line of the behavior log, written by web-server or PHP hooks.
///
///   {"timestamp_ms":N,"kind":"script_exec","script_path":P,"duration_ms":N,"cpu_pct":X}
///   {"timestamp_ms":N,"kind":"outbound_msg","protocol":"smtp","dest":D[,"script_path":P]}
///   {"timestamp_ms":N,"kind":"file_touch","script_path":P,"touched_path":T}
///   {"timestamp_ms":N,"kind":"link_created","dest":URL[,"script_path":P]}
struct event {
  timestamp_ms timestamp = 0;
  event_kind kind = event_kind::script_exec;
  std::string script_path;
  std::int64_t duration_ms = 0;
  double cpu_pct = 0;
  protocol proto = protocol::other;
  std::string dest;
  std::string touched_path;

  std::string to_json() const;
  /// Throws errc::stream_unreadable with the reason.
  static event from_json(std::string_view line);
};

struct skipped_line {
  std::size_t line = 0;
  std::string reason;
};

struct ingest_report {
  std::vector<event> events;  // ordered by timestamp (stable)
  std::vector<skipped_line> skipped;
  std::size_t lines = 0;  // non-blank lines seen
};

/// Malformed lines are skipped and reported, never fatal.
ingest_report ingest(std::string_view stream);
/// Throws errc::stream_unreadable when the file cannot be read.
ingest_report ingest_file(const fs::path& p);

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------
inline constexpr std::size_t feature_count = 8;
inline constexpr std::array<std::string_view, feature_count> feature_names{
    "max_exec_ms",    "total_exec_ms",   "mean_cpu_pct",   "smtp_out_count",
    "http_out_count", "distinct_dests",  "new_links_count", "core_touch_count"};

std::optional<std::size_t> feature_index(std::string_view name);

inline constexpr std::string_view aggregate_marker = "*";

struct feature_vector {
  timestamp_ms window_start = 0;
  std::int64_t window_len_s = 60;
  std::string script_path{aggregate_marker};
  std::array<double, feature_count> values{};

  double operator[](std::size_t i) const { return values[i]; }
  std::string to_json() const;
};

enum class group_by { script, global };

/// Tumbling windows aligned to multiples of the window length; empty
/// windows are omitted. Output is ordered by window then script path.
/// core_touch_count counts file_touch events on `core_paths`; with no set
/// every file_touch counts. Events without a script path group under "*".
std::vector<feature_vector> window_features(const std::vector<event>& events, std::int64_t window_len_s, group_by g,
                                            const std::set<std::string>* core_paths = nullptr);

// ---------------------------------------------------------------------------
// decision tree
// ---------------------------------------------------------------------------
inline constexpr std::string_view benign_label = "benign";

struct tree_node {
  int feature = -1;  // -1 for a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  std::string label;
  std::map<std::string, std::size_t> class_counts;

  bool is_leaf() const { return feature < 0; }
};

struct decision_tree {
  std::vector<tree_node> nodes;  // nodes[0] is the root
  unsigned max_depth = 0;
  std::size_t min_leaf = 1;

  std::string to_json() const;
  /// Throws errc::insufficient_data for structurally broken trees.
  static decision_tree from_json(std::string_view text);
  /// Indented text rendering for human review.
  std::string describe() const;
};

struct sample {
  std::vector<double> x;
  std::string label;
};

struct train_params {
  unsigned max_depth = 6;
  std::size_t min_leaf = 1;
};

/// Greedy CART with Gini impurity over midpoint thresholds. Candidates are
/// compared exactly in integer arithmetic; ties go to the lowest feature
/// index, then the lowest threshold. Majority ties at leaves resolve to
/// benign. A single-class sample set yields a one-leaf tree and a warning.
decision_tree train_tree(const std::vector<sample>& samples, const train_params& params,
                         std::vector<std::string>* warnings = nullptr);

/// value < threshold descends left. Throws errc::missing_feature when the
/// tree reads a feature the input lacks (or that is NaN).
std::string classify(const decision_tree& t, const std::vector<double>& x);
std::string classify(const decision_tree& t, const feature_vector& fv);

struct builtin_thresholds {
  double smtp = 100;
  double exec_ms = 10'000;
  double cpu_pct = 80;
  double links = 50;

  bool set(std::string_view key, std::string_view value);
};

decision_tree builtin_tree(const builtin_thresholds& th = {});

// ---------------------------------------------------------------------------
// alerts
// ---------------------------------------------------------------------------
enum class alert_category { resource_abuse, mail_storm, core_tamper, sitemap_drift, link_farm };
std::string_view to_string(alert_category c);
std::optional<alert_category> category_for_label(std::string_view label);

struct alert {
  std::string alert_id;
  signatures::severity level = signatures::severity::medium;
  alert_category cat = alert_category::resource_abuse;
  std::string subject;
  std::string detail;
  timestamp_ms window_start = 0;
  timestamp_ms window_end = 0;

  std::string to_json() const;
  static alert from_json(std::string_view line);
};

/// One alert per feature vector the tree does not label benign.
std::vector<alert> classify_windows(const decision_tree& t, const std::vector<feature_vector>& fvs);

std::vector<alert> core_touch_alerts(const std::vector<event>& events, const integrity::baseline_manifest& manifest);

struct drift_report {
  std::set<std::string> added;
  std::set<std::string> removed;
  bool flagged = false;
};

drift_report sitemap_drift(std::string_view current_document, const std::set<std::string>& baseline_urls,
                           std::size_t new_link_threshold);
alert drift_alert(const drift_report& r, std::string_view sitemap_location, timestamp_ms at);

// ---------------------------------------------------------------------------
// delivery
// ---------------------------------------------------------------------------
class alert_sink {
 public:
  virtual ~alert_sink() = default;
  virtual std::string name() const = 0;
  /// Throws on failure.
  virtual void deliver(const alert& a) = 0;
};

/// Appends JSON lines to an alerts log.
class file_sink : public alert_sink {
 public:
  explicit file_sink(fs::path p) : path_(std::move(p)) {}
  std::string name() const override { return "file:" + path_.string(); }
  void deliver(const alert& a) override;

 private:
  fs::path path_;
};

/// Writes one RFC 5322 message per alert into a spool directory for the
/// local MTA to pick up.
class smtp_spool_sink : public alert_sink {
 public:
  smtp_spool_sink(fs::path spool_dir, std::string from, std::string to)
      : dir_(std::move(spool_dir)), from_(std::move(from)), to_(std::move(to)) {}
  std::string name() const override { return "smtp-spool:" + dir_.string(); }
  void deliver(const alert& a) override;
  static std::string render_message(const alert& a, std::string_view from, std::string_view to);

 private:
  fs::path dir_;
  std::string from_;
  std::string to_;
};

struct delivery_record {
  std::string alert_id;
  std::string sink;
  bool delivered = false;
  unsigned retry_count = 0;
  bool dead_lettered = false;
  std::string last_error;
};

struct dispatch_options {
  unsigned max_retries = 3;
  std::chrono::milliseconds base_backoff{200};
  fs::path dead_letter;
  /// Replaceable for tests; defaults to sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Retries with exponential backoff; when every attempt fails the alert is
/// appended to the dead-letter file. Throws errc::sink_unavailable only if
/// the dead-letter write fails too.
delivery_record dispatch_alert(const alert& a, alert_sink& sink, const dispatch_options& opt);

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------
/// Feature vectors drawn from benign and abusive profiles, labeled by the
/// builtin rules with the given thresholds.
std::vector<sample> synthetic_samples(std::size_t n, std::uint64_t seed, const builtin_thresholds& th = {});

struct synthetic_log {
  std::vector<event> events;
  std::map<std::string, std::size_t> kind_counts;
};

/// `n` benign events from `start` on, roughly ten per second. `abusive`
/// adds a mail storm, a CPU-heavy script and a link burst on top.
synthetic_log synthetic_events(std::size_t n, std::uint64_t seed, timestamp_ms start, bool abusive);

}  // namespace hostguard::monitor
