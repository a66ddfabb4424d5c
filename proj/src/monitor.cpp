#include "hostguard/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "hostguard/error.hpp"
#include "hostguard/sitemap.hpp"

namespace hostguard::monitor {

using json = nlohmann::json;
using signatures::severity;

namespace {

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// events
// ---------------------------------------------------------------------------
std::string_view to_string(event_kind k) {
  switch (k) {
    case event_kind::script_exec: return "script_exec";
    case event_kind::outbound_msg: return "outbound_msg";
    case event_kind::file_touch: return "file_touch";
    case event_kind::link_created: return "link_created";
  }
  return "?";
}

std::string_view to_string(protocol p) {
  switch (p) {
    case protocol::smtp: return "smtp";
    case protocol::http: return "http";
    case protocol::dns: return "dns";
    case protocol::other: return "other";
  }
  return "?";
}

std::string event::to_json() const {
  json j;
  j["timestamp_ms"] = timestamp;
  j["kind"] = std::string(to_string(kind));
  switch (kind) {
    case event_kind::script_exec:
      j["script_path"] = script_path;
      j["duration_ms"] = duration_ms;
      j["cpu_pct"] = cpu_pct;
      break;
    case event_kind::outbound_msg:
      j["protocol"] = std::string(to_string(proto));
      j["dest"] = dest;
      if (!script_path.empty()) j["script_path"] = script_path;
      break;
    case event_kind::file_touch:
      j["script_path"] = script_path;
      j["touched_path"] = touched_path;
      break;
    case event_kind::link_created:
      j["dest"] = dest;
      if (!script_path.empty()) j["script_path"] = script_path;
      break;
  }
  return dump(j);
}

event event::from_json(std::string_view line) {
  auto bad = [](const std::string& why) { return error(errc::stream_unreadable, why); };
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw bad("not a JSON object");
  auto text = [&](const char* k, bool required) -> std::string {
    if (!j.contains(k)) {
      if (required) throw bad(std::string("missing ") + k);
      return {};
    }
    if (!j[k].is_string()) throw bad(std::string(k) + " must be text");
    auto s = j[k].get<std::string>();
    if (required && s.empty()) throw bad(std::string(k) + " is empty");
    return s;
  };
  event e;
  if (!j.contains("timestamp_ms") || !j["timestamp_ms"].is_number_integer()) throw bad("missing timestamp_ms");
  e.timestamp = j["timestamp_ms"].get<std::int64_t>();
  if (e.timestamp < 0) throw bad("negative timestamp_ms");
  auto kind = text("kind", true);
  if (kind == "script_exec") {
    e.kind = event_kind::script_exec;
    e.script_path = text("script_path", true);
    if (!j.contains("duration_ms") || !j["duration_ms"].is_number_integer()) throw bad("missing duration_ms");
    e.duration_ms = j["duration_ms"].get<std::int64_t>();
    if (e.duration_ms < 0) throw bad("negative duration_ms");
    if (!j.contains("cpu_pct") || !j["cpu_pct"].is_number()) throw bad("missing cpu_pct");
    e.cpu_pct = j["cpu_pct"].get<double>();
    if (!(e.cpu_pct >= 0 && e.cpu_pct <= 100)) throw bad("cpu_pct outside 0..100");
  } else if (kind == "outbound_msg") {
    e.kind = event_kind::outbound_msg;
    auto p = text("protocol", true);
    if (p == "smtp") e.proto = protocol::smtp;
    else if (p == "http") e.proto = protocol::http;
    else if (p == "dns") e.proto = protocol::dns;
    else if (p == "other") e.proto = protocol::other;
    else throw bad("unknown protocol " + p);
    e.dest = text("dest", true);
    e.script_path = text("script_path", false);
  } else if (kind == "file_touch") {
    e.kind = event_kind::file_touch;
    e.script_path = text("script_path", true);
    e.touched_path = text("touched_path", true);
  } else if (kind == "link_created") {
    e.kind = event_kind::link_created;
    e.dest = text("dest", true);
    e.script_path = text("script_path", false);
  } else {
    throw bad("unknown kind " + kind);
  }
  return e;
}

ingest_report ingest(std::string_view stream) {
  ingest_report r;
  std::size_t line_no = 0, pos = 0;
  while (pos < stream.size()) {
    auto nl = stream.find('\n', pos);
    auto line = stream.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? stream.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    ++r.lines;
    try {
      r.events.push_back(event::from_json(line));
    } catch (const error& e) {
      r.skipped.push_back({line_no, e.what()});
    }
  }
  std::stable_sort(r.events.begin(), r.events.end(),
                   [](const event& a, const event& b) { return a.timestamp < b.timestamp; });
  return r;
}

ingest_report ingest_file(const fs::path& p) {
  std::string text;
  try {
    text = read_file(p);
  } catch (const error& e) {
    throw error(errc::stream_unreadable, e.what());
  }
  return ingest(text);
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------
std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < feature_count; ++i)
    if (feature_names[i] == name) return i;
  return std::nullopt;
}

std::string feature_vector::to_json() const {
  json j;
  j["window_start"] = format_utc(window_start);
  j["window_len_s"] = window_len_s;
  j["script_path"] = script_path;
  for (std::size_t i = 0; i < feature_count; ++i) j[std::string(feature_names[i])] = values[i];
  return dump(j);
}

std::vector<feature_vector> window_features(const std::vector<event>& events, std::int64_t window_len_s, group_by g,
                                            const std::set<std::string>* core_paths) {
  if (window_len_s < 1) throw error(errc::precondition_violated, "window length must be at least 1s");
  const std::int64_t len_ms = window_len_s * 1000;
  struct acc {
    double max_exec = 0, total_exec = 0, cpu_sum = 0;
    std::size_t cpu_n = 0, smtp = 0, http = 0, links = 0, core = 0;
    std::set<std::string> dests;
  };
  std::map<std::pair<timestamp_ms, std::string>, acc> windows;
  for (const auto& e : events) {
    timestamp_ms start = e.timestamp - (((e.timestamp % len_ms) + len_ms) % len_ms);
    std::string key = g == group_by::global || e.script_path.empty() ? std::string(aggregate_marker) : e.script_path;
    auto& a = windows[{start, key}];
    switch (e.kind) {
      case event_kind::script_exec:
        a.max_exec = std::max(a.max_exec, static_cast<double>(e.duration_ms));
        a.total_exec += static_cast<double>(e.duration_ms);
        a.cpu_sum += e.cpu_pct;
        ++a.cpu_n;
        break;
      case event_kind::outbound_msg:
        if (e.proto == protocol::smtp) ++a.smtp;
        if (e.proto == protocol::http) ++a.http;
        a.dests.insert(e.dest);
        break;
      case event_kind::file_touch:
        if (!core_paths || core_paths->count(e.touched_path)) ++a.core;
        break;
      case event_kind::link_created:
        ++a.links;
        break;
    }
  }
  std::vector<feature_vector> out;
  out.reserve(windows.size());
  for (const auto& [key, a] : windows) {
    feature_vector fv;
    fv.window_start = key.first;
    fv.window_len_s = window_len_s;
    fv.script_path = key.second;
    fv.values = {a.max_exec,
                 a.total_exec,
                 a.cpu_n ? a.cpu_sum / static_cast<double>(a.cpu_n) : 0.0,
                 static_cast<double>(a.smtp),
                 static_cast<double>(a.http),
                 static_cast<double>(a.dests.size()),
                 static_cast<double>(a.links),
                 static_cast<double>(a.core)};
    out.push_back(std::move(fv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// decision tree
// ---------------------------------------------------------------------------
namespace {

std::string majority(const std::map<std::string, std::size_t>& counts) {
  std::size_t best = 0;
  for (const auto& [l, n] : counts) best = std::max(best, n);
  auto b = counts.find(std::string(benign_label));
  if (b != counts.end() && b->second == best) return b->first;
  for (const auto& [l, n] : counts)
    if (n == best) return l;
  return std::string(benign_label);
}

using i128 = __int128;

// Weighted Gini of a split, scaled by n, as the fraction num/den with
// num = nR(nL^2 - sum kL^2) + nL(nR^2 - sum kR^2) and den = nL * nR.
struct split_score {
  i128 num = 0;
  i128 den = 1;
  bool better_than(const split_score& o) const { return num * o.den < o.num * den; }
};

class trainer {
 public:
  trainer(const std::vector<sample>& s, const train_params& p) : samples_(s), params_(p) {
    for (const auto& x : s) class_of_.emplace(x.label, 0);
    int c = 0;
    for (auto& [l, id] : class_of_) id = c++;
    labels_.reserve(s.size());
    for (const auto& x : s) labels_.push_back(class_of_.at(x.label));
  }

  decision_tree run() {
    std::vector<std::size_t> all(samples_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    tree_.max_depth = params_.max_depth;
    tree_.min_leaf = params_.min_leaf;
    build(all, 0);
    return std::move(tree_);
  }

 private:
  int build(std::vector<std::size_t>& idx, unsigned depth) {
    int me = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::map<std::string, std::size_t> counts;
    for (auto i : idx) ++counts[samples_[i].label];
    tree_.nodes[static_cast<std::size_t>(me)].class_counts = counts;
    tree_.nodes[static_cast<std::size_t>(me)].label = majority(counts);
    if (counts.size() < 2 || depth >= params_.max_depth || idx.size() < 2 * params_.min_leaf) return me;

    int feature = -1;
    double threshold = 0;
    split_score best;
    const std::size_t nf = samples_[idx[0]].x.size();
    const std::size_t nc = class_of_.size();
    std::vector<std::size_t> order = idx;
    std::vector<i128> left(nc), total(nc, 0);
    for (auto i : idx) ++total[static_cast<std::size_t>(labels_[i])];
    const i128 n = static_cast<i128>(idx.size());
    for (std::size_t f = 0; f < nf; ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples_[a].x[f] < samples_[b].x[f] || (samples_[a].x[f] == samples_[b].x[f] && a < b);
      });
      std::fill(left.begin(), left.end(), 0);
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        ++left[static_cast<std::size_t>(labels_[order[k]])];
        double lo = samples_[order[k]].x[f], hi = samples_[order[k + 1]].x[f];
        if (!(lo < hi)) continue;
        const i128 nl = static_cast<i128>(k + 1), nr = n - nl;
        if (nl < static_cast<i128>(params_.min_leaf) || nr < static_cast<i128>(params_.min_leaf)) continue;
        i128 sl = 0, sr = 0;
        for (std::size_t c = 0; c < nc; ++c) {
          sl += left[c] * left[c];
          i128 r = total[c] - left[c];
          sr += r * r;
        }
        split_score s{nr * (nl * nl - sl) + nl * (nr * nr - sr), nl * nr};
        if (feature < 0 || s.better_than(best)) {
          best = s;
          feature = static_cast<int>(f);
          threshold = midpoint(lo, hi);
        }
      }
    }
    if (feature < 0) return me;

    std::vector<std::size_t> l, r;
    for (auto i : idx) (samples_[i].x[static_cast<std::size_t>(feature)] < threshold ? l : r).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    tree_.nodes[static_cast<std::size_t>(me)].feature = feature;
    tree_.nodes[static_cast<std::size_t>(me)].threshold = threshold;
    int li = build(l, depth + 1);
    int ri = build(r, depth + 1);
    tree_.nodes[static_cast<std::size_t>(me)].left = li;
    tree_.nodes[static_cast<std::size_t>(me)].right = ri;
    return me;
  }

  // The midpoint of two adjacent doubles can round onto the lower one,
  // which would send it right; fall back to the upper value then.
  static double midpoint(double lo, double hi) {
    double m = lo + (hi - lo) / 2;
    return m > lo ? m : hi;
  }

  const std::vector<sample>& samples_;
  train_params params_;
  std::map<std::string, int> class_of_;
  std::vector<int> labels_;
  decision_tree tree_;
};

}  // namespace

decision_tree train_tree(const std::vector<sample>& samples, const train_params& params,
                         std::vector<std::string>* warnings) {
  if (samples.size() < 2) throw error(errc::insufficient_data, "need at least 2 samples");
  if (params.min_leaf < 1) throw error(errc::insufficient_data, "min_leaf must be at least 1");
  const auto nf = samples[0].x.size();
  if (nf == 0) throw error(errc::insufficient_data, "samples have no features");
  for (const auto& s : samples) {
    if (s.x.size() != nf) throw error(errc::missing_feature, "samples differ in feature count");
    if (s.label.empty()) throw error(errc::insufficient_data, "sample without a label");
    for (double v : s.x)
      if (std::isnan(v)) throw error(errc::missing_feature, "NaN feature value");
  }
  std::set<std::string> labels;
  for (const auto& s : samples) labels.insert(s.label);
  if (labels.size() < 2 && warnings)
    warnings->push_back("DegenerateLabels: every sample is labeled " + *labels.begin() + "; tree is a single leaf");
  return trainer(samples, params).run();
}

std::string classify(const decision_tree& t, const std::vector<double>& x) {
  if (t.nodes.empty()) throw error(errc::insufficient_data, "empty tree");
  std::size_t at = 0;
  for (std::size_t steps = 0; steps <= t.nodes.size(); ++steps) {
    const auto& n = t.nodes[at];
    if (n.is_leaf()) return n.label;
    auto f = static_cast<std::size_t>(n.feature);
    if (f >= x.size() || std::isnan(x[f]))
      throw error(errc::missing_feature,
                  "feature " + (f < feature_count ? std::string(feature_names[f]) : std::to_string(f)) + " missing");
    at = static_cast<std::size_t>(x[f] < n.threshold ? n.left : n.right);
  }
  throw error(errc::insufficient_data, "tree has a cycle");
}

std::string classify(const decision_tree& t, const feature_vector& fv) {
  return classify(t, std::vector<double>(fv.values.begin(), fv.values.end()));
}

std::string decision_tree::to_json() const {
  json j;
  j["max_depth"] = max_depth;
  j["min_leaf"] = min_leaf;
  json ns = json::array();
  for (const auto& n : nodes) {
    json o;
    if (n.is_leaf()) {
      o["label"] = n.label;
      o["class_counts"] = n.class_counts;
    } else {
      o["feature"] = n.feature;
      if (static_cast<std::size_t>(n.feature) < feature_count)
        o["feature_name"] = std::string(feature_names[static_cast<std::size_t>(n.feature)]);
      o["threshold"] = n.threshold;
      o["left"] = n.left;
      o["right"] = n.right;
      o["class_counts"] = n.class_counts;
    }
    ns.push_back(std::move(o));
  }
  j["nodes"] = std::move(ns);
  return j.dump(1);
}

decision_tree decision_tree::from_json(std::string_view text) {
  auto bad = [](const std::string& why) { return error(errc::insufficient_data, "tree: " + why); };
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("nodes") || !j["nodes"].is_array()) throw bad("not a tree document");
  decision_tree t;
  try {
    t.max_depth = j.value("max_depth", 0u);
    t.min_leaf = j.value("min_leaf", std::size_t{1});
    for (const auto& o : j["nodes"]) {
      tree_node n;
      if (o.contains("feature")) {
        n.feature = o.at("feature").get<int>();
        n.threshold = o.at("threshold").get<double>();
        n.left = o.at("left").get<int>();
        n.right = o.at("right").get<int>();
        if (n.feature < 0) throw bad("negative feature index");
      } else {
        n.label = o.at("label").get<std::string>();
        if (n.label.empty()) throw bad("leaf without label");
      }
      if (o.contains("class_counts")) n.class_counts = o["class_counts"].get<std::map<std::string, std::size_t>>();
      t.nodes.push_back(std::move(n));
    }
  } catch (const json::exception& e) {
    throw bad(e.what());
  }
  if (t.nodes.empty()) throw bad("no nodes");
  // Single rooted binary tree: every non-root node has exactly one parent.
  std::vector<int> parents(t.nodes.size(), 0);
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) {
      std::size_t sum = 0;
      for (const auto& [l, c] : n.class_counts) sum += c;
      if (sum == 0) throw bad("leaf with empty class counts");
      continue;
    }
    for (int c : {n.left, n.right}) {
      if (c <= 0 || static_cast<std::size_t>(c) >= t.nodes.size()) throw bad("child index out of range");
      ++parents[static_cast<std::size_t>(c)];
    }
  }
  for (std::size_t i = 1; i < parents.size(); ++i)
    if (parents[i] != 1) throw bad("node " + std::to_string(i) + " is not reached exactly once");
  return t;
}

std::string decision_tree::describe() const {
  std::ostringstream o;
  std::function<void(int, int)> walk = [&](int i, int depth) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    if (n.is_leaf()) {
      o << pad << "-> " << n.label << "\n";
      return;
    }
    auto f = static_cast<std::size_t>(n.feature);
    std::string name = f < feature_count ? std::string(feature_names[f]) : "x" + std::to_string(f);
    o << pad << "if " << name << " < " << fmt_num(n.threshold) << ":\n";
    walk(n.left, depth + 1);
    o << pad << "else:\n";
    walk(n.right, depth + 1);
  };
  if (!nodes.empty()) walk(0, 0);
  return o.str();
}

bool builtin_thresholds::set(std::string_view key, std::string_view value) {
  double* target = nullptr;
  if (key == "smtp_threshold") target = &smtp;
  else if (key == "exec_threshold_ms") target = &exec_ms;
  else if (key == "cpu_threshold_pct") target = &cpu_pct;
  else if (key == "link_threshold") target = &links;
  else return false;
  try {
    std::size_t used = 0;
    std::string v(trim(value));
    double d = std::stod(v, &used);
    if (used != v.size() || !(d >= 0)) throw std::invalid_argument("bad");
    *target = d;
  } catch (const std::exception&) {
    throw error(errc::config_error, std::string(key) + ": expected a non-negative number");
  }
  return true;
}

decision_tree builtin_tree(const builtin_thresholds& th) {
  auto idx = [](std::string_view n) { return static_cast<int>(*feature_index(n)); };
  decision_tree t;
  t.max_depth = 4;
  auto leaf = [&](std::string label) {
    tree_node n;
    n.label = label;
    n.class_counts[label] = 1;
    t.nodes.push_back(std::move(n));
    return static_cast<int>(t.nodes.size() - 1);
  };
  auto split = [&](int feature, double thr) {
    tree_node n;
    n.feature = feature;
    n.threshold = thr;
    t.nodes.push_back(std::move(n));
    return static_cast<int>(t.nodes.size() - 1);
  };
  auto link = [&](int parent, int l, int r) {
    t.nodes[static_cast<std::size_t>(parent)].left = l;
    t.nodes[static_cast<std::size_t>(parent)].right = r;
  };
  auto links_check = [&]() {
    int n = split(idx("new_links_count"), th.links);
    int b = leaf(std::string(benign_label));
    int f = leaf("link_farm");
    link(n, b, f);
    return n;
  };
  int root = split(idx("smtp_out_count"), th.smtp);
  int exec = split(idx("max_exec_ms"), th.exec_ms);
  int storm = leaf("mail_storm");
  link(root, exec, storm);
  int low_exec = links_check();
  int cpu = split(idx("mean_cpu_pct"), th.cpu_pct);
  link(exec, low_exec, cpu);
  int low_cpu = links_check();
  int abuse = leaf("resource_abuse");
  link(cpu, low_cpu, abuse);
  return t;
}

// ---------------------------------------------------------------------------
// alerts
// ---------------------------------------------------------------------------
std::string_view to_string(alert_category c) {
  switch (c) {
    case alert_category::resource_abuse: return "resource_abuse";
    case alert_category::mail_storm: return "mail_storm";
    case alert_category::core_tamper: return "core_tamper";
    case alert_category::sitemap_drift: return "sitemap_drift";
    case alert_category::link_farm: return "link_farm";
  }
  return "?";
}

std::optional<alert_category> category_for_label(std::string_view label) {
  for (auto c : {alert_category::resource_abuse, alert_category::mail_storm, alert_category::core_tamper,
                 alert_category::sitemap_drift, alert_category::link_farm})
    if (to_string(c) == label) return c;
  return std::nullopt;
}

namespace {

std::string make_alert_id(const alert& a, std::size_t ordinal) {
  auto basis = std::string(to_string(a.cat)) + "\n" + a.subject + "\n" + std::to_string(a.window_start) + "\n" +
               std::to_string(ordinal) + "\n" + a.detail;
  return "al-" + sha256_hex(basis).substr(0, 20);
}

severity severity_for(alert_category c) {
  switch (c) {
    case alert_category::core_tamper: return severity::critical;
    case alert_category::mail_storm:
    case alert_category::resource_abuse:
    case alert_category::sitemap_drift: return severity::high;
    case alert_category::link_farm: return severity::high;
  }
  return severity::medium;
}

}  // namespace

std::string alert::to_json() const {
  json j{{"alert_id", alert_id},
         {"severity", std::string(signatures::to_string(level))},
         {"category", std::string(to_string(cat))},
         {"subject", subject},
         {"detail", detail},
         {"window_start", format_utc(window_start)},
         {"window_end", format_utc(window_end)}};
  return dump(j);
}

alert alert::from_json(std::string_view line) {
  auto bad = [](const std::string& why) { return error(errc::stream_unreadable, "alert: " + why); };
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw bad("not a JSON object");
  alert a;
  try {
    a.alert_id = j.at("alert_id").get<std::string>();
    auto sev = signatures::parse_severity(j.at("severity").get<std::string>());
    auto cat = category_for_label(j.at("category").get<std::string>());
    if (!sev || !cat) throw bad("unknown severity or category");
    a.level = *sev;
    a.cat = *cat;
    a.subject = j.at("subject").get<std::string>();
    a.detail = j.at("detail").get<std::string>();
    auto ws = parse_utc(j.at("window_start").get<std::string>());
    auto we = parse_utc(j.at("window_end").get<std::string>());
    if (!ws || !we) throw bad("bad window");
    a.window_start = *ws;
    a.window_end = *we;
  } catch (const json::exception& e) {
    throw bad(e.what());
  }
  return a;
}

std::vector<alert> classify_windows(const decision_tree& t, const std::vector<feature_vector>& fvs) {
  std::vector<alert> out;
  for (std::size_t i = 0; i < fvs.size(); ++i) {
    const auto& fv = fvs[i];
    auto label = classify(t, fv);
    if (label == benign_label) continue;
    alert a;
    a.cat = category_for_label(label).value_or(alert_category::resource_abuse);
    a.level = severity_for(a.cat);
    a.subject = fv.script_path;
    a.window_start = fv.window_start;
    a.window_end = fv.window_start + fv.window_len_s * 1000;
    std::string features;
    for (std::size_t f = 0; f < feature_count; ++f) {
      if (fv.values[f] == 0) continue;
      if (!features.empty()) features += ", ";
      features += std::string(feature_names[f]) + "=" + fmt_num(fv.values[f]);
    }
    a.detail = "script " + fv.script_path + " classified as " + label + " between " + format_utc(a.window_start) +
               " and " + format_utc(a.window_end) + ": " + (features.empty() ? "no activity" : features);
    a.alert_id = make_alert_id(a, i);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<alert> core_touch_alerts(const std::vector<event>& events, const integrity::baseline_manifest& manifest) {
  std::vector<alert> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.kind != event_kind::file_touch) continue;
    auto rel = normalize_rel_path(e.touched_path);
    if (!rel || !manifest.contains(*rel)) continue;
    alert a;
    a.cat = alert_category::core_tamper;
    a.level = severity_for(a.cat);
    a.subject = *rel;
    a.window_start = a.window_end = e.timestamp;
    a.detail = "core file " + *rel + " was modified by " + e.script_path + " at " + format_utc(e.timestamp);
    a.alert_id = make_alert_id(a, i);
    out.push_back(std::move(a));
  }
  return out;
}

drift_report sitemap_drift(std::string_view current_document, const std::set<std::string>& baseline_urls,
                           std::size_t new_link_threshold) {
  auto current = parse_sitemap(current_document);
  drift_report r;
  std::set_difference(current.begin(), current.end(), baseline_urls.begin(), baseline_urls.end(),
                      std::inserter(r.added, r.added.end()));
  std::set_difference(baseline_urls.begin(), baseline_urls.end(), current.begin(), current.end(),
                      std::inserter(r.removed, r.removed.end()));
  r.flagged = r.added.size() >= new_link_threshold;
  return r;
}

alert drift_alert(const drift_report& r, std::string_view sitemap_location, timestamp_ms at) {
  alert a;
  a.cat = alert_category::sitemap_drift;
  a.level = severity_for(a.cat);
  a.subject = std::string(sitemap_location);
  a.window_start = a.window_end = at;
  a.detail = "sitemap " + a.subject + " gained " + std::to_string(r.added.size()) + " links and lost " +
             std::to_string(r.removed.size()) + "; added:";
  for (const auto& u : r.added) a.detail += " " + u;
  a.alert_id = make_alert_id(a, 0);
  return a;
}

// ---------------------------------------------------------------------------
// delivery
// ---------------------------------------------------------------------------
void file_sink::deliver(const alert& a) { append_line_durable(path_, a.to_json()); }

namespace {

std::string header_safe(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(c == '\r' || c == '\n' ? ' ' : c);
  return out;
}

std::string rfc5322_date(timestamp_ms t) {
  std::time_t secs = static_cast<std::time_t>(t / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%a, %d %b %Y %H:%M:%S +0000", &tm);
  return buf;
}

}  // namespace

std::string smtp_spool_sink::render_message(const alert& a, std::string_view from, std::string_view to) {
  std::ostringstream m;
  m << "From: " << header_safe(from) << "\r\n"
    << "To: " << header_safe(to) << "\r\n"
    << "Subject: [hostguard] " << to_string(a.cat) << ": " << header_safe(a.subject) << "\r\n"
    << "Date: " << rfc5322_date(a.window_end) << "\r\n"
    << "Message-ID: <" << a.alert_id << "@hostguard>\r\n"
    << "MIME-Version: 1.0\r\n"
    << "Content-Type: text/plain; charset=utf-8\r\n"
    << "\r\n"
    << "Severity: " << signatures::to_string(a.level) << "\r\n"
    << "Category: " << to_string(a.cat) << "\r\n"
    << "Script: " << header_safe(a.subject) << "\r\n"
    << "Window: " << format_utc(a.window_start) << " - " << format_utc(a.window_end) << "\r\n"
    << "\r\n";
  // Body lines are normalized to CRLF.
  for (const auto& line : split(a.detail, '\n')) m << line << "\r\n";
  return m.str();
}

void smtp_spool_sink::deliver(const alert& a) {
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) throw error(errc::sink_unavailable, "spool directory missing: " + dir_.string());
  write_file_atomic(dir_ / (a.alert_id + ".eml"), render_message(a, from_, to_));
}

delivery_record dispatch_alert(const alert& a, alert_sink& sink, const dispatch_options& opt) {
  delivery_record rec;
  rec.alert_id = a.alert_id;
  rec.sink = sink.name();
  auto backoff = opt.base_backoff;
  for (unsigned attempt = 0; attempt <= opt.max_retries; ++attempt) {
    if (attempt > 0) {
      if (opt.sleep) opt.sleep(backoff);
      else std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    try {
      sink.deliver(a);
      rec.delivered = true;
      rec.retry_count = attempt;
      return rec;
    } catch (const std::exception& e) {
      rec.last_error = e.what();
    }
  }
  rec.retry_count = opt.max_retries;
  if (opt.dead_letter.empty())
    throw error(errc::sink_unavailable, "delivery failed and no dead-letter file is configured: " + rec.last_error);
  try {
    append_line_durable(opt.dead_letter, a.to_json());
  } catch (const error& e) {
    throw error(errc::sink_unavailable, "delivery and dead-letter both failed: " + std::string(e.what()));
  }
  rec.dead_lettered = true;
  return rec;
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------
std::vector<sample> synthetic_samples(std::size_t n, std::uint64_t seed, const builtin_thresholds& th) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto count = [&](double lo, double hi) { return std::floor(uni(lo, hi + 1)); };
  auto tree = builtin_tree(th);
  std::vector<sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(feature_count, 0.0);
    double max_exec = std::round(uni(5, 0.3 * th.exec_ms));
    double cpu = std::round(uni(1, 0.75 * th.cpu_pct) * 10) / 10;
    double smtp = count(0, 0.2 * th.smtp), links = count(0, 0.2 * th.links);
    // Abusive profiles straddle their thresholds so both sides are seen.
    switch (rng() % 5) {
      case 0: smtp = count(0.5 * th.smtp, 6 * th.smtp); break;
      case 1:
        max_exec = std::round(uni(0.5 * th.exec_ms, 9 * th.exec_ms));
        cpu = std::round(uni(0.6 * th.cpu_pct, 100) * 10) / 10;
        break;
      case 2: links = count(0.5 * th.links, 6 * th.links); break;
      default: break;
    }
    x[*feature_index("max_exec_ms")] = max_exec;
    x[*feature_index("total_exec_ms")] = max_exec * count(1, 20);
    x[*feature_index("mean_cpu_pct")] = std::min(cpu, 100.0);
    x[*feature_index("smtp_out_count")] = smtp;
    x[*feature_index("http_out_count")] = count(0, 40);
    x[*feature_index("distinct_dests")] = count(0, 15);
    x[*feature_index("new_links_count")] = links;
    x[*feature_index("core_touch_count")] = count(0, 1);
    auto label = classify(tree, x);
    out.push_back({std::move(x), std::move(label)});
  }
  return out;
}

synthetic_log synthetic_events(std::size_t n, std::uint64_t seed, timestamp_ms start, bool abusive) {
  std::mt19937_64 rng(seed);
  static const char* scripts[] = {"index.php", "wp-cron.php", "wp-admin/admin-ajax.php", "wp-login.php",
                                  "wp-content/themes/site/functions.php", "xmlrpc.php"};
  static const char* hosts[] = {"api.wordpress.org", "fonts.googleapis.com", "cdn.example.net", "payments.example.com"};
  synthetic_log log;
  timestamp_ms t = start;
  auto pick = [&](auto& arr) { return arr[rng() % (sizeof(arr) / sizeof(arr[0]))]; };
  for (std::size_t i = 0; i < n; ++i) {
    t += static_cast<timestamp_ms>(rng() % 200);
    event e;
    e.timestamp = t;
    auto r = rng() % 1000;
    if (r < 900) {
      e.kind = event_kind::script_exec;
      e.script_path = pick(scripts);
      e.duration_ms = static_cast<std::int64_t>(5 + rng() % 1500);
      e.cpu_pct = static_cast<double>(1 + rng() % 500) / 10.0;
    } else if (r < 960) {
      e.kind = event_kind::outbound_msg;
      e.proto = protocol::http;
      e.dest = std::string("https://") + pick(hosts) + "/";
      e.script_path = pick(scripts);
    } else if (r < 970) {
      e.kind = event_kind::outbound_msg;
      e.proto = protocol::smtp;
      e.dest = "smtp://localhost:25";
      e.script_path = "wp-content/plugins/contact-form/send.php";
    } else if (r < 975) {
      e.kind = event_kind::outbound_msg;
      e.proto = protocol::dns;
      e.dest = pick(hosts);
    } else if (r < 990) {
      e.kind = event_kind::file_touch;
      e.script_path = "wp-cron.php";
      e.touched_path = "wp-content/cache/page-" + std::to_string(rng() % 100) + ".html";
    } else {
      e.kind = event_kind::link_created;
      e.dest = "https://site.example/blog/post-" + std::to_string(i);
      e.script_path = "wp-admin/post.php";
    }
    log.events.push_back(std::move(e));
  }
  if (abusive) {
    timestamp_ms mid = start + (t - start) / 2;
    for (int i = 0; i < 600; ++i) {
      event e;
      e.timestamp = mid + i * 50;
      e.kind = event_kind::outbound_msg;
      e.proto = protocol::smtp;
      e.dest = "smtp://mx" + std::to_string(i % 40) + ".victim.example:25";
      e.script_path = "wp-content/uploads/2023/mailer.php";
      log.events.push_back(std::move(e));
    }
    for (int i = 0; i < 5; ++i) {
      event e;
      e.timestamp = mid + 1000 + i * 5000;
      e.kind = event_kind::script_exec;
      e.script_path = "wp-includes/js/jquery/jquery.min.php";
      e.duration_ms = 60'000;
      e.cpu_pct = 95;
      log.events.push_back(std::move(e));
    }
    for (int i = 0; i < 80; ++i) {
      event e;
      e.timestamp = mid + 2000 + i * 100;
      e.kind = event_kind::link_created;
      e.dest = "https://site.example/cheap-pills-" + std::to_string(i) + ".html";
      e.script_path = "wp-content/plugins/seo-booster/gen.php";
      log.events.push_back(std::move(e));
    }
    std::stable_sort(log.events.begin(), log.events.end(),
                     [](const event& a, const event& b) { return a.timestamp < b.timestamp; });
  }
  for (const auto& e : log.events) ++log.kind_counts[std::string(to_string(e.kind))];
  return log;
}

}  // namespace hostguard::monitor
