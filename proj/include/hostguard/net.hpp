#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace hostguard::net {

/// IPv4 addresses are held in their IPv4-mapped IPv6 form (::ffff:a.b.c.d).
struct ip_address {
  std::array<std::uint8_t, 16> bytes{};

  bool is_v4() const;
  std::uint32_t v4() const;  // host order; only meaningful when is_v4()
  unsigned __int128 value() const;
  static ip_address from_value(unsigned __int128 v);
  static ip_address from_v4(std::uint32_t v);
  std::string to_string() const;

  auto operator<=>(const ip_address&) const = default;
};

std::optional<ip_address> parse_ip(std::string_view s);

struct cidr {
  ip_address base;  // masked
  unsigned prefix = 128;  // in the 128-bit space

  unsigned __int128 first() const;
  unsigned __int128 last() const;
  bool contains(const ip_address& a) const;
  std::string to_string() const;
};

/// `a.b.c.d/n`, `x:y::/n` or a bare address (host route).
std::optional<cidr> parse_cidr(std::string_view s);

/// Reversed query name for DNS-based lists: d.c.b.a for IPv4, 32 nibbles
/// for IPv6.
std::string reverse_name(const ip_address& a);

}  // namespace hostguard::net
