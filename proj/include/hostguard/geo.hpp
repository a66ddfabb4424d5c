#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hostguard/net.hpp"
#include "hostguard/util.hpp"

namespace hostguard::geo {

/// Country lookup over non-overlapping address ranges.
///
/// Text form: one `cidr,iso2` per line, `#` comments. Ranges are sorted on
/// load; overlapping ranges are rejected.
class range_table {
 public:
  struct range {
    unsigned __int128 first;
    unsigned __int128 last;
    std::string country;
  };

  static range_table parse(std::string_view text);
  static range_table load(const fs::path& p);

  std::optional<std::string> lookup(const net::ip_address& a) const;
  std::size_t size() const { return ranges_.size(); }

 private:
  std::vector<range> ranges_;
};

}  // namespace hostguard::geo
