#include "hostguard/net.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <charconv>

namespace hostguard::net {

namespace {
constexpr std::array<std::uint8_t, 12> v4_prefix{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff};
}

bool ip_address::is_v4() const { return std::equal(v4_prefix.begin(), v4_prefix.end(), bytes.begin()); }

std::uint32_t ip_address::v4() const {
  return (std::uint32_t{bytes[12]} << 24) | (std::uint32_t{bytes[13]} << 16) | (std::uint32_t{bytes[14]} << 8) |
         bytes[15];
}

unsigned __int128 ip_address::value() const {
  unsigned __int128 v = 0;
  for (auto b : bytes) v = (v << 8) | b;
  return v;
}

ip_address ip_address::from_value(unsigned __int128 v) {
  ip_address a;
  for (int i = 15; i >= 0; --i) {
    a.bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  return a;
}

ip_address ip_address::from_v4(std::uint32_t v) {
  ip_address a;
  std::copy(v4_prefix.begin(), v4_prefix.end(), a.bytes.begin());
  a.bytes[12] = static_cast<std::uint8_t>(v >> 24);
  a.bytes[13] = static_cast<std::uint8_t>(v >> 16);
  a.bytes[14] = static_cast<std::uint8_t>(v >> 8);
  a.bytes[15] = static_cast<std::uint8_t>(v);
  return a;
}

std::string ip_address::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {};
  if (is_v4()) {
    ::inet_ntop(AF_INET, bytes.data() + 12, buf, sizeof buf);
  } else {
    ::inet_ntop(AF_INET6, bytes.data(), buf, sizeof buf);
  }
  return buf;
}

std::optional<ip_address> parse_ip(std::string_view s) {
  if (s.empty() || s.size() >= INET6_ADDRSTRLEN) return std::nullopt;
  std::string z(s);
  ip_address a;
  unsigned char v4[4];
  if (z.find(':') == std::string::npos) {
    if (::inet_pton(AF_INET, z.c_str(), v4) != 1) return std::nullopt;
    std::copy(v4_prefix.begin(), v4_prefix.end(), a.bytes.begin());
    std::copy(v4, v4 + 4, a.bytes.begin() + 12);
    return a;
  }
  if (::inet_pton(AF_INET6, z.c_str(), a.bytes.data()) != 1) return std::nullopt;
  return a;
}

unsigned __int128 cidr::first() const { return base.value(); }

unsigned __int128 cidr::last() const {
  if (prefix == 0) return ~static_cast<unsigned __int128>(0);
  unsigned __int128 host = prefix >= 128 ? 0 : (static_cast<unsigned __int128>(1) << (128 - prefix)) - 1;
  return base.value() | host;
}

bool cidr::contains(const ip_address& a) const {
  auto v = a.value();
  return v >= first() && v <= last();
}

std::string cidr::to_string() const {
  if (base.is_v4() && prefix >= 96) return base.to_string() + "/" + std::to_string(prefix - 96);
  return base.to_string() + "/" + std::to_string(prefix);
}

std::optional<cidr> parse_cidr(std::string_view s) {
  auto slash = s.find('/');
  auto ip = parse_ip(s.substr(0, slash));
  if (!ip) return std::nullopt;
  bool v4 = ip->is_v4() && s.substr(0, slash).find(':') == std::string_view::npos;
  unsigned bits = v4 ? 32 : 128;
  unsigned len = bits;
  if (slash != std::string_view::npos) {
    auto p = s.substr(slash + 1);
    auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), len);
    if (ec != std::errc{} || end != p.data() + p.size() || p.empty() || len > bits) return std::nullopt;
  }
  cidr c;
  c.prefix = v4 ? len + 96 : len;
  unsigned __int128 mask =
      c.prefix == 0 ? 0 : ~static_cast<unsigned __int128>(0) << (128 - c.prefix);
  c.base = ip_address::from_value(ip->value() & mask);
  return c;
}

std::string reverse_name(const ip_address& a) {
  std::string out;
  if (a.is_v4()) {
    for (int i = 15; i >= 12; --i) {
      if (!out.empty()) out += '.';
      out += std::to_string(a.bytes[static_cast<std::size_t>(i)]);
    }
    return out;
  }
  static const char hex[] = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    auto b = a.bytes[static_cast<std::size_t>(i)];
    if (!out.empty()) out += '.';
    out += hex[b & 0xf];
    out += '.';
    out += hex[b >> 4];
  }
  return out;
}

}  // namespace hostguard::net
