#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace hgtest {

using namespace hostguard::monitor;
using hostguard::timestamp_ms;

namespace {

// Weighted Gini impurity of a split as an exact rational:
// sum over sides of (n_side / n) * (1 - sum (k / n_side)^2).
struct frac {
  __int128 p, q;
};

frac reduce(frac f) {
  auto a = f.p < 0 ? -f.p : f.p, b = f.q;
  while (b) {
    auto t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) f.p /= a, f.q /= a;
  return f;
}

frac gini_side(const std::map<std::string, long>& counts, long n_side, long n) {
  // (n_side^2 - sum k^2) / (n * n_side)
  __int128 sq = 0;
  for (auto& [l, k] : counts) sq += static_cast<__int128>(k) * k;
  return reduce({static_cast<__int128>(n_side) * n_side - sq, static_cast<__int128>(n) * n_side});
}

frac add(frac a, frac b) { return reduce({a.p * b.q + b.p * a.q, a.q * b.q}); }

int cmp(frac a, frac b) {
  auto l = a.p * b.q, r = b.p * a.q;
  return l < r ? -1 : l > r ? 1 : 0;
}

}  // namespace

oracle_split exhaustive_split(const std::vector<sample>& s, const std::vector<std::size_t>& idx, std::size_t min_leaf) {
  oracle_split best;
  frac best_score{0, 1};
  const long n = static_cast<long>(idx.size());
  if (idx.empty()) return best;
  for (std::size_t f = 0; f < s[idx[0]].x.size(); ++f) {
    std::set<double> distinct;
    for (auto i : idx) distinct.insert(s[i].x[f]);
    std::vector<double> vals(distinct.begin(), distinct.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      double mid = (vals[k] + vals[k + 1]) / 2;
      if (!(mid > vals[k])) mid = vals[k + 1];
      std::map<std::string, long> l, r;
      long nl = 0, nr = 0;
      for (auto i : idx) {
        if (s[i].x[f] < mid) ++l[s[i].label], ++nl;
        else ++r[s[i].label], ++nr;
      }
      if (nl < static_cast<long>(min_leaf) || nr < static_cast<long>(min_leaf)) continue;
      frac sc = add(gini_side(l, nl, n), gini_side(r, nr, n));
      if (best.feature < 0 || cmp(sc, best_score) < 0) {
        best = {static_cast<int>(f), mid};
        best_score = sc;
      }
    }
  }
  return best;
}

std::vector<std::vector<std::size_t>> node_members(const decision_tree& t, const std::vector<sample>& s) {
  std::vector<std::vector<std::size_t>> m(t.nodes.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t at = 0;
    while (true) {
      m[at].push_back(i);
      const auto& n = t.nodes[at];
      if (n.is_leaf()) break;
      at = static_cast<std::size_t>(s[i].x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
  }
  return m;
}

std::vector<unsigned> node_depths(const decision_tree& t) {
  std::vector<unsigned> d(t.nodes.size(), 0);
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    if (!t.nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(t.nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(t.nodes[i].right)] = d[i] + 1;
    }
  return d;
}

std::string tree_oracle_mismatch(const decision_tree& t, const std::vector<sample>& s, const train_params& p) {
  auto members = node_members(t, s);
  auto depth = node_depths(t);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    std::map<std::string, std::size_t> counts;
    for (auto k : members[i]) ++counts[s[k].label];
    auto where = "node " + std::to_string(i) + ": ";
    if (counts != n.class_counts) return where + "class counts differ";
    auto o = exhaustive_split(s, members[i], p.min_leaf);
    if (n.is_leaf()) {
      bool stop =
          counts.size() < 2 || depth[i] >= p.max_depth || members[i].size() < 2 * p.min_leaf || o.feature < 0;
      if (!stop) return where + "leaf could have split";
      continue;
    }
    if (o.feature < 0) return where + "split where the oracle finds none";
    if (n.feature != o.feature || n.threshold != o.threshold)
      return where + "split f" + std::to_string(n.feature) + "<" + std::to_string(n.threshold) + ", oracle f" +
             std::to_string(o.feature) + "<" + std::to_string(o.threshold);
  }
  return {};
}

std::map<window_key, std::array<double, feature_count>> recount_windows(const std::vector<event>& es,
                                                                        std::int64_t len_s, group_by g) {
  const std::int64_t len = len_s * 1000;
  auto key_of = [&](const event& e) {
    timestamp_ms w = e.timestamp / len * len;
    return window_key{w, g == group_by::global || e.script_path.empty() ? "*" : e.script_path};
  };
  std::set<window_key> keys;
  for (const auto& e : es) keys.insert(key_of(e));
  std::map<window_key, std::array<double, feature_count>> out;
  for (const auto& k : keys) {
    double mx = 0, tot = 0, cpu = 0;
    long cpun = 0, smtp = 0, http = 0, links = 0, core = 0;
    std::set<std::string> dests;
    for (const auto& e : es) {
      if (key_of(e) != k) continue;
      if (e.kind == event_kind::script_exec) {
        mx = std::max(mx, double(e.duration_ms));
        tot += double(e.duration_ms);
        cpu += e.cpu_pct;
        ++cpun;
      } else if (e.kind == event_kind::outbound_msg) {
        smtp += e.proto == protocol::smtp;
        http += e.proto == protocol::http;
        dests.insert(e.dest);
      } else if (e.kind == event_kind::file_touch) {
        ++core;
      } else {
        ++links;
      }
    }
    out[k] = {mx, tot, cpun ? cpu / double(cpun) : 0.0, double(smtp), double(http), double(dests.size()),
              double(links), double(core)};
  }
  return out;
}

std::string window_mismatch(const std::vector<feature_vector>& got, const std::vector<event>& es, std::int64_t len_s,
                            group_by g) {
  auto want = recount_windows(es, len_s, g);
  if (got.size() != want.size())
    return std::to_string(got.size()) + " windows, recount has " + std::to_string(want.size());
  auto it = want.begin();
  for (const auto& fv : got) {
    auto where = std::to_string(fv.window_start) + "/" + fv.script_path;
    if (fv.window_start != it->first.first || fv.script_path != it->first.second) return where + ": key differs";
    for (std::size_t f = 0; f < feature_count; ++f) {
      bool same = f == 2 ? std::fabs(fv[f] - it->second[f]) <= 1e-9 * std::max(1.0, std::fabs(fv[f]))
                         : fv[f] == it->second[f];
      if (!same) return where + ": feature " + std::to_string(f) + " differs";
      if (fv[f] < 0) return where + ": negative feature";
    }
    ++it;
  }
  return {};
}

std::vector<event> random_events(std::uint64_t seed, timestamp_ms start, std::size_t n) {
  std::mt19937_64 rng(seed);
  const char* scripts[] = {"a.php", "b.php", "c.php", ""};
  std::vector<event> es;
  timestamp_ms t = start;
  for (std::size_t i = 0; i < n; ++i) {
    t += static_cast<timestamp_ms>(rng() % 90);
    std::string s = scripts[rng() % 4];
    event e;
    e.timestamp = t;
    switch (rng() % 4) {
      case 0:
        e.kind = event_kind::script_exec;
        e.script_path = s.empty() ? "a.php" : s;
        e.duration_ms = static_cast<std::int64_t>(rng() % 20'000);
        e.cpu_pct = (rng() % 1001) / 10.0;
        break;
      case 1:
        e.kind = event_kind::outbound_msg;
        e.proto = static_cast<protocol>(rng() % 4);
        e.dest = "d" + std::to_string(rng() % 30);
        e.script_path = s;
        break;
      case 2:
        e.kind = event_kind::file_touch;
        e.script_path = s.empty() ? "b.php" : s;
        e.touched_path = "f" + std::to_string(rng() % 5);
        break;
      default:
        e.kind = event_kind::link_created;
        e.dest = "u" + std::to_string(i);
        e.script_path = s;
    }
    es.push_back(std::move(e));
  }
  return es;
}

}  // namespace hgtest
