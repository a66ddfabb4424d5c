#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hostguard/net.hpp"
#include "hostguard/util.hpp"

namespace hostguard::reputation {

struct result {
  net::ip_address ip;
  std::string zone;
  bool listed = false;
  std::optional<net::ip_address> response_code;  // inside 127.0.0.0/8 when listed
  std::int64_t latency_ms = 0;
  bool failed = false;
  std::string note;  // timeout, servfail, no_ipv6, ...
};

class resolver {
 public:
  virtual ~resolver() = default;
  /// One result per list consulted.
  virtual std::vector<result> check(const net::ip_address& ip) = 0;
};

struct endpoint {
  net::ip_address addr;
  std::uint16_t port = 53;
};

/// `host[:port]` or `[v6]:port`.
std::optional<endpoint> parse_endpoint(std::string_view s, std::uint16_t default_port = 53);

bool valid_zone(std::string_view zone);

/// Builds a standard recursive A query; exposed for tests.
std::string build_query(std::uint16_t id, std::string_view qname);

/// Queries every zone in parallel over one UDP socket and waits at most
/// `timeout_ms` in total.
class dnsbl_resolver : public resolver {
 public:
  dnsbl_resolver(endpoint server, std::vector<std::string> zones, std::set<std::string> ipv6_zones,
                 int timeout_ms, bool fail_open);
  std::vector<result> check(const net::ip_address& ip) override;

 private:
  endpoint server_;
  std::vector<std::string> zones_;
  std::set<std::string> ipv6_zones_;
  int timeout_ms_;
  bool fail_open_;
};

/// Single-zone convenience wrapper.
result dnsbl_lookup(const net::ip_address& ip, const std::string& zone, const endpoint& server, int timeout_ms,
                    bool fail_open = true);

/// Recorded answers standing in for lists that cannot be queried offline
/// (including the HTTP-based Safe Browsing lookup). CSV lines
/// `source,cidr,code`, e.g. `safebrowsing,198.51.100.23,127.0.0.2`.
class fixture_resolver : public resolver {
 public:
  static std::unique_ptr<fixture_resolver> parse(std::string_view text);
  static std::unique_ptr<fixture_resolver> load(const fs::path& p);
  std::vector<result> check(const net::ip_address& ip) override;

 private:
  struct entry {
    net::cidr range;
    net::ip_address code;
  };
  std::map<std::string, std::vector<entry>> sources_;
};

}  // namespace hostguard::reputation
