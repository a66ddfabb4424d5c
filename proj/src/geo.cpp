#include "hostguard/geo.hpp"

#include <algorithm>

#include "hostguard/error.hpp"

namespace hostguard::geo {

range_table range_table::parse(std::string_view text) {
  range_table t;
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto bad = [&](const std::string& why) {
      return error(errc::malformed_geo_table, "line " + std::to_string(lineno) + ": " + why);
    };
    auto comma = line.find(',');
    if (comma == std::string_view::npos) throw bad("expected cidr,iso2");
    auto c = net::parse_cidr(trim(line.substr(0, comma)));
    if (!c) throw bad("bad cidr");
    auto cc = to_upper(trim(line.substr(comma + 1)));
    if (cc.size() != 2 || !std::isalpha(static_cast<unsigned char>(cc[0])) ||
        !std::isalpha(static_cast<unsigned char>(cc[1]))) {
      throw bad("bad country code");
    }
    t.ranges_.push_back({c->first(), c->last(), cc});
  }
  std::sort(t.ranges_.begin(), t.ranges_.end(), [](const range& a, const range& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < t.ranges_.size(); ++i) {
    if (t.ranges_[i].first <= t.ranges_[i - 1].last) {
      throw error(errc::malformed_geo_table, "overlapping ranges for " + t.ranges_[i].country + " and " +
                                                 t.ranges_[i - 1].country);
    }
  }
  return t;
}

range_table range_table::load(const fs::path& p) {
  std::string text;
  try {
    text = read_file(p);
  } catch (const error& e) {
    throw error(errc::malformed_geo_table, e.what());
  }
  return parse(text);
}

std::optional<std::string> range_table::lookup(const net::ip_address& a) const {
  auto v = a.value();
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), v,
                             [](unsigned __int128 x, const range& r) { return x < r.first; });
  if (it == ranges_.begin()) return std::nullopt;
  --it;
  if (v > it->last) return std::nullopt;
  return it->country;
}

}  // namespace hostguard::geo
