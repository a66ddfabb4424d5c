#include "hostguard/signatures.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "hostguard/error.hpp"

namespace hostguard::signatures {

using json = nlohmann::json;

std::string_view to_string(threat_class c) {
  switch (c) {
    case threat_class::webshell: return "webshell";
    case threat_class::miner: return "miner";
    case threat_class::phishing_redirect: return "phishing_redirect";
    case threat_class::injector: return "injector";
    case threat_class::spam_mailer: return "spam_mailer";
    case threat_class::generic_obfuscation: return "generic_obfuscation";
  }
  return "webshell";
}

std::string_view to_string(severity s) {
  switch (s) {
    case severity::low: return "low";
    case severity::medium: return "medium";
    case severity::high: return "high";
    case severity::critical: return "critical";
  }
  return "medium";
}

std::optional<threat_class> parse_threat_class(std::string_view s) {
  for (auto c : {threat_class::webshell, threat_class::miner, threat_class::phishing_redirect,
                 threat_class::injector, threat_class::spam_mailer, threat_class::generic_obfuscation}) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

std::optional<severity> parse_severity(std::string_view s) {
  for (auto v : {severity::low, severity::medium, severity::high, severity::critical}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

bool signature_set::has_binary_signatures() const {
  return std::any_of(signatures.begin(), signatures.end(), [](const signature& s) { return s.binary_ok; });
}

const signature* signature_set::find(std::string_view id) const {
  for (const auto& s : signatures) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

signature_set parse_signatures(std::string_view text, const fs::path& origin) {
  signature_set set;
  set.loaded_from = origin;
  set.checksum = fnv1a64(as_bytes(text));
  std::set<std::string, std::less<>> ids;

  auto malformed = [](int line, const std::string& why) {
    return error(errc::malformed_signature_file, "line " + std::to_string(line) + ": " + why);
  };

  int lineno = 0;
  for (auto& raw : split(text, '\n')) {
    ++lineno;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view tag = "#! version ";
      if (line.substr(0, tag.size()) == tag) set.version = std::string(trim(line.substr(tag.size())));
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != 6) {
      throw malformed(lineno, "expected 6 tab-separated fields, found " + std::to_string(fields.size()));
    }
    signature sig;
    sig.id = std::string(trim(fields[0]));
    if (sig.id.empty()) throw malformed(lineno, "empty id");
    auto klass = parse_threat_class(trim(fields[1]));
    if (!klass) throw malformed(lineno, "unknown threat class '" + fields[1] + "'");
    sig.klass = *klass;
    auto level = parse_severity(trim(fields[2]));
    if (!level) throw malformed(lineno, "unknown severity '" + fields[2] + "'");
    sig.level = *level;

    bool ci = true;
    std::string flags(trim(fields[3]));
    if (flags != "-") {
      for (auto& flag : split_list(flags)) {
        if (flag == "ci") {
          ci = true;
        } else if (flag == "cs") {
          ci = false;
        } else if (flag == "binary_ok") {
          sig.binary_ok = true;
        } else if (flag.rfind("max=", 0) == 0) {
          try {
            std::size_t used = 0;
            auto v = std::stoull(flag.substr(4), &used);
            if (used != flag.size() - 4 || v == 0) throw std::invalid_argument("max");
            sig.max_target_bytes = static_cast<std::size_t>(v);
          } catch (const std::exception&) {
            throw malformed(lineno, "bad max= flag '" + flag + "'");
          }
        } else {
          throw malformed(lineno, "unknown flag '" + flag + "'");
        }
      }
    }
    if (fields[4].empty()) throw malformed(lineno, "empty pattern");
    try {
      sig.pattern = regex::compile(fields[4], ci);
    } catch (const error& e) {
      throw error(errc::pattern_compile_error, sig.id + ": " + e.what());
    }
    sig.description = std::string(trim(fields[5]));
    if (!ids.insert(sig.id).second) {
      throw error(errc::duplicate_id, "line " + std::to_string(lineno) + ": " + sig.id);
    }
    set.signatures.push_back(std::move(sig));
  }
  if (set.signatures.empty()) throw error(errc::malformed_signature_file, "no signatures in file");
  if (set.version.empty()) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(set.checksum));
    set.version = buf;
  }
  return set;
}

signature_set load_signatures(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const error& e) {
    throw error(errc::malformed_signature_file, std::string("unreadable: ") + e.what());
  }
  return parse_signatures(text, path);
}

bool looks_binary(bytes_view content) {
  auto head = content.first(std::min<std::size_t>(content.size(), 4096));
  return std::find(head.begin(), head.end(), 0) != head.end();
}

std::vector<signature_hit> scan_content(bytes_view content, const signature_set& set,
                                        std::string_view origin, bool binary) {
  std::vector<signature_hit> hits;
  for (const auto& sig : set.signatures) {
    if (binary && !sig.binary_ok) continue;
    auto target = content;
    if (sig.max_target_bytes && target.size() > *sig.max_target_bytes) {
      target = target.first(*sig.max_target_bytes);
    }
    for (const auto& m : sig.pattern.find_all(target)) {
      signature_hit h;
      h.signature_id = sig.id;
      h.file_path = std::string(origin);
      h.byte_offset = m.begin;
      auto len = std::min(m.end - m.begin, excerpt_limit);
      h.matched_excerpt.assign(reinterpret_cast<const char*>(target.data()) + m.begin, len);
      h.klass = sig.klass;
      h.level = sig.level;
      hits.push_back(std::move(h));
    }
  }
  return hits;
}

// ---------------------------------------------------------------------------
// tree scanning
// ---------------------------------------------------------------------------
namespace {

struct candidate {
  std::string rel;
  fs::path abs;
  std::string skip_reason;  // set during the walk for entries never opened
};

struct file_outcome {
  bool scanned = false;
  std::string skip_reason;
  std::vector<signature_hit> hits;
};

file_outcome scan_one(const candidate& c, const signature_set& set, const scan_limits& limits,
                      bool have_binary_sigs) {
  file_outcome o;
  if (!c.skip_reason.empty()) {
    o.skip_reason = c.skip_reason;
    return o;
  }
  std::error_code ec;
  auto size = fs::file_size(c.abs, ec);
  if (ec) {
    o.skip_reason = "unreadable";
    return o;
  }
  if (size > limits.max_file_bytes) {
    o.skip_reason = "too_large";
    return o;
  }
  std::ifstream in(c.abs, std::ios::binary);
  if (!in) {
    o.skip_reason = "unreadable";
    return o;
  }
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    o.skip_reason = "unreadable";
    return o;
  }
  auto bytes = as_bytes(data);
  bool binary = looks_binary(bytes);
  if (binary && !have_binary_sigs) {
    o.skip_reason = "binary_excluded";
    return o;
  }
  o.scanned = true;
  o.hits = scan_content(bytes, set, c.rel, binary);
  std::stable_sort(o.hits.begin(), o.hits.end(),
                   [](const auto& a, const auto& b) { return a.byte_offset < b.byte_offset; });
  return o;
}

scan_report run_scan(const fs::path& root, std::vector<candidate> candidates, const signature_set& set,
                     const scan_limits& limits) {
  scan_report report;
  report.root = root.string();
  report.started_at = now_ms();
  auto t0 = std::chrono::steady_clock::now();

  std::vector<file_outcome> outcomes(candidates.size());
  const bool have_binary = set.has_binary_signatures();
  unsigned workers = limits.workers ? limits.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, candidates.size())));
  auto job = [&](unsigned w) {
    for (std::size_t i = w; i < candidates.size(); i += workers) {
      outcomes[i] = scan_one(candidates[i], set, limits, have_binary);
    }
  };
  if (workers <= 1) {
    job(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(job, w);
    for (auto& t : pool) t.join();
  }

  // candidates are already in path order
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& o = outcomes[i];
    if (o.scanned) {
      ++report.files_scanned;
      for (auto& h : o.hits) report.hits.push_back(std::move(h));
    } else {
      report.files_skipped.push_back({candidates[i].rel, o.skip_reason});
    }
  }
  report.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  return report;
}

}  // namespace

scan_report scan_tree(const fs::path& root, const signature_set& set, const scan_limits& limits) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw error(errc::root_not_found, root.string());
  std::vector<candidate> all;
  for (auto& e : walk_tree(root, limits.follow_symlinks)) {
    candidate c{e.rel, e.abs, {}};
    switch (e.kind) {
      case entry_kind::file: break;
      case entry_kind::symlink: c.skip_reason = "symlink_not_followed"; break;
      case entry_kind::unreadable: c.skip_reason = "unreadable"; break;
      default: c.skip_reason = "not_regular"; break;
    }
    all.push_back(std::move(c));
  }

  std::vector<candidate> selected;
  for (auto& c : all) {
    if (!limits.include_globs.empty() && !any_glob_match(limits.include_globs, c.rel)) continue;
    if (any_glob_match(limits.exclude_globs, c.rel)) continue;
    selected.push_back(std::move(c));
  }
  std::sort(selected.begin(), selected.end(), [](const auto& a, const auto& b) { return a.rel < b.rel; });
  return run_scan(root, std::move(selected), set, limits);
}

scan_report scan_files(const fs::path& root, const std::vector<std::string>& rel_paths,
                       const signature_set& set, const scan_limits& limits) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw error(errc::root_not_found, root.string());
  std::vector<candidate> selected;
  std::unordered_set<std::string> dedupe;
  for (const auto& rel : rel_paths) {
    if (!dedupe.insert(rel).second) continue;
    candidate c{rel, root / rel, {}};
    auto lst = fs::symlink_status(c.abs, ec);
    if (ec || !fs::exists(lst)) {
      c.skip_reason = "unreadable";
    } else if (fs::is_symlink(lst) && !limits.follow_symlinks) {
      c.skip_reason = "symlink_not_followed";
    } else if (!fs::is_regular_file(fs::status(c.abs, ec))) {
      c.skip_reason = "not_regular";
    }
    selected.push_back(std::move(c));
  }
  std::sort(selected.begin(), selected.end(), [](const auto& a, const auto& b) { return a.rel < b.rel; });
  return run_scan(root, std::move(selected), set, limits);
}

namespace {
json hit_json(const signature_hit& h) {
  return json{{"type", "hit"},
              {"signature_id", h.signature_id},
              {"path", h.file_path},
              {"offset", h.byte_offset},
              {"excerpt", h.matched_excerpt},
              {"threat_class", to_string(h.klass)},
              {"severity", to_string(h.level)}};
}

std::string render(const scan_report& r, bool with_timing) {
  std::string out;
  auto dump = [](const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); };
  for (const auto& h : r.hits) {
    out += dump(hit_json(h));
    out += '\n';
  }
  json skipped = json::array();
  for (const auto& s : r.files_skipped) skipped.push_back({{"path", s.path}, {"reason", s.reason}});
  json summary{{"type", "summary"},
               {"root", r.root},
               {"files_scanned", r.files_scanned},
               {"files_skipped", r.files_skipped.size()},
               {"skipped", skipped},
               {"hits", r.hits.size()}};
  if (with_timing) {
    summary["duration_ms"] = r.duration_ms;
    summary["started_at"] = format_utc(r.started_at);
  }
  out += dump(summary);
  out += '\n';
  return out;
}
}  // namespace

std::string scan_report::to_jsonl() const { return render(*this, true); }
std::string scan_report::to_jsonl_stable() const { return render(*this, false); }

}  // namespace hostguard::signatures
