#include "hostguard/reputation.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cstring>
#include <random>

#include "hostguard/error.hpp"

namespace hostguard::reputation {

namespace {

using clock_type = std::chrono::steady_clock;

std::int64_t elapsed_ms(clock_type::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(clock_type::now() - since).count();
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v >> 8));
  s.push_back(static_cast<char>(v & 0xff));
}

std::uint16_t get16(std::string_view s, std::size_t at) {
  return static_cast<std::uint16_t>((static_cast<unsigned char>(s[at]) << 8) | static_cast<unsigned char>(s[at + 1]));
}

// Skips a possibly compressed name; returns npos on malformed input.
std::size_t skip_name(std::string_view msg, std::size_t at) {
  for (int guard = 0; guard < 128 && at < msg.size(); ++guard) {
    auto len = static_cast<unsigned char>(msg[at]);
    if (len == 0) return at + 1;
    if ((len & 0xc0) == 0xc0) return at + 2 <= msg.size() ? at + 2 : std::string_view::npos;
    if (len & 0xc0) return std::string_view::npos;
    at += 1 + len;
  }
  return std::string_view::npos;
}

struct answer {
  int rcode = -1;  // -1: malformed
  std::vector<net::ip_address> a_records;
};

answer parse_response(std::string_view msg) {
  answer out;
  if (msg.size() < 12) return out;
  auto flags = get16(msg, 2);
  if (!(flags & 0x8000)) return out;  // not a response
  auto qd = get16(msg, 4), an = get16(msg, 6);
  std::size_t at = 12;
  for (int i = 0; i < qd; ++i) {
    at = skip_name(msg, at);
    if (at == std::string_view::npos || at + 4 > msg.size()) return out;
    at += 4;
  }
  for (int i = 0; i < an; ++i) {
    at = skip_name(msg, at);
    if (at == std::string_view::npos || at + 10 > msg.size()) return out;
    auto type = get16(msg, at), klass = get16(msg, at + 2), rdlen = get16(msg, at + 8);
    at += 10;
    if (at + rdlen > msg.size()) return out;
    if (type == 1 && klass == 1 && rdlen == 4) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) v = (v << 8) | static_cast<unsigned char>(msg[at + static_cast<std::size_t>(b)]);
      out.a_records.push_back(net::ip_address::from_v4(v));
    }
    at += rdlen;
  }
  out.rcode = flags & 0x000f;
  return out;
}

bool in_loopback8(const net::ip_address& a) { return a.is_v4() && (a.v4() >> 24) == 127; }

}  // namespace

std::optional<endpoint> parse_endpoint(std::string_view s, std::uint16_t default_port) {
  endpoint e;
  e.port = default_port;
  std::string_view host = s;
  std::string_view port;
  if (!s.empty() && s[0] == '[') {
    auto close = s.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = s.substr(1, close - 1);
    if (close + 1 < s.size()) {
      if (s[close + 1] != ':') return std::nullopt;
      port = s.substr(close + 2);
    }
  } else if (std::count(s.begin(), s.end(), ':') == 1) {
    auto colon = s.find(':');
    host = s.substr(0, colon);
    port = s.substr(colon + 1);
  }
  auto ip = net::parse_ip(host);
  if (!ip) return std::nullopt;
  e.addr = *ip;
  if (!port.empty() || (s.size() && s.back() == ':')) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), v);
    if (ec != std::errc{} || p != port.data() + port.size() || v == 0 || v > 65535) return std::nullopt;
    e.port = static_cast<std::uint16_t>(v);
  }
  return e;
}

bool valid_zone(std::string_view zone) {
  if (zone.empty() || zone.size() > 200) return false;
  for (const auto& label : split(zone, '.')) {
    if (label.empty() || label.size() > 63 || label.front() == '-' || label.back() == '-') return false;
    for (char c : label) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
    }
  }
  return true;
}

std::string build_query(std::uint16_t id, std::string_view qname) {
  std::string q;
  put16(q, id);
  put16(q, 0x0100);  // RD
  put16(q, 1);
  put16(q, 0);
  put16(q, 0);
  put16(q, 0);
  for (const auto& label : split(qname, '.')) {
    if (label.empty()) continue;
    q.push_back(static_cast<char>(label.size()));
    q += label;
  }
  q.push_back('\0');
  put16(q, 1);  // A
  put16(q, 1);  // IN
  return q;
}

dnsbl_resolver::dnsbl_resolver(endpoint server, std::vector<std::string> zones, std::set<std::string> ipv6_zones,
                               int timeout_ms, bool fail_open)
    : server_(server),
      zones_(std::move(zones)),
      ipv6_zones_(std::move(ipv6_zones)),
      timeout_ms_(timeout_ms),
      fail_open_(fail_open) {
  for (const auto& z : zones_) {
    if (!valid_zone(z)) throw error(errc::invalid_policy, "bad DNSBL zone " + z);
  }
}

std::vector<result> dnsbl_resolver::check(const net::ip_address& ip) {
  auto start = clock_type::now();
  std::vector<result> out(zones_.size());
  auto fail = [&](result& r, const std::string& note) {
    r.failed = true;
    r.listed = !fail_open_;
    r.note = note;
    r.latency_ms = elapsed_ms(start);
  };

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < zones_.size(); ++i) {
    out[i].ip = ip;
    out[i].zone = zones_[i];
    if (!ip.is_v4() && !ipv6_zones_.count(zones_[i])) {
      out[i].note = "no_ipv6";
      continue;
    }
    pending.push_back(i);
  }
  if (pending.empty()) return out;

  bool v4_server = server_.addr.is_v4();
  int fd = ::socket(v4_server ? AF_INET : AF_INET6, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd < 0) {
    for (auto i : pending) fail(out[i], "socket");
    return out;
  }
  sockaddr_storage ss{};
  socklen_t slen;
  if (v4_server) {
    auto* sa = reinterpret_cast<sockaddr_in*>(&ss);
    sa->sin_family = AF_INET;
    sa->sin_port = htons(server_.port);
    std::memcpy(&sa->sin_addr, server_.addr.bytes.data() + 12, 4);
    slen = sizeof(sockaddr_in);
  } else {
    auto* sa = reinterpret_cast<sockaddr_in6*>(&ss);
    sa->sin6_family = AF_INET6;
    sa->sin6_port = htons(server_.port);
    std::memcpy(&sa->sin6_addr, server_.addr.bytes.data(), 16);
    slen = sizeof(sockaddr_in6);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&ss), slen) != 0) {
    ::close(fd);
    for (auto i : pending) fail(out[i], "connect");
    return out;
  }

  static thread_local std::mt19937 rng(std::random_device{}());
  std::map<std::uint16_t, std::size_t> by_id;
  auto rev = net::reverse_name(ip);
  for (auto i : pending) {
    std::uint16_t id;
    do {
      id = static_cast<std::uint16_t>(rng());
    } while (by_id.count(id));
    by_id[id] = i;
    auto q = build_query(id, rev + "." + zones_[i]);
    if (::send(fd, q.data(), q.size(), 0) < 0) {
      fail(out[i], "send");
      by_id.erase(id);
    }
  }

  char buf[1500];
  while (!by_id.empty()) {
    auto left = timeout_ms_ - elapsed_ms(start);
    if (left <= 0) break;
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(left));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) break;
    auto n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 12) continue;  // includes ICMP errors surfacing as -1
    std::string_view msg(buf, static_cast<std::size_t>(n));
    auto it = by_id.find(get16(msg, 0));
    if (it == by_id.end()) continue;
    auto& r = out[it->second];
    auto a = parse_response(msg);
    if (a.rcode < 0) continue;
    by_id.erase(it);
    r.latency_ms = elapsed_ms(start);
    if (a.rcode == 3) {
      r.note = "nxdomain";
    } else if (a.rcode == 0) {
      for (const auto& rec : a.a_records) {
        if (in_loopback8(rec)) {
          r.listed = true;
          r.response_code = rec;
          break;
        }
      }
      if (!r.listed) r.note = a.a_records.empty() ? "nodata" : "answer_outside_127/8";
    } else {
      fail(r, a.rcode == 2 ? "servfail" : "rcode_" + std::to_string(a.rcode));
    }
  }
  ::close(fd);
  for (auto& [id, i] : by_id) fail(out[i], "timeout");
  return out;
}

result dnsbl_lookup(const net::ip_address& ip, const std::string& zone, const endpoint& server, int timeout_ms,
                    bool fail_open) {
  dnsbl_resolver r(server, {zone}, {zone}, timeout_ms, fail_open);
  return r.check(ip).front();
}

std::unique_ptr<fixture_resolver> fixture_resolver::parse(std::string_view text) {
  auto f = std::make_unique<fixture_resolver>();
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto cols = split(line, ',');
    if (cols.size() != 3) {
      throw error(errc::invalid_policy, "reputation fixture line " + std::to_string(lineno) + ": expected 3 columns");
    }
    auto range = net::parse_cidr(trim(cols[1]));
    auto code = net::parse_ip(trim(cols[2]));
    if (!range || !code || !in_loopback8(*code)) {
      throw error(errc::invalid_policy, "reputation fixture line " + std::to_string(lineno) + ": bad address");
    }
    f->sources_[std::string(trim(cols[0]))].push_back({*range, *code});
  }
  return f;
}

std::unique_ptr<fixture_resolver> fixture_resolver::load(const fs::path& p) { return parse(read_file(p)); }

std::vector<result> fixture_resolver::check(const net::ip_address& ip) {
  std::vector<result> out;
  for (const auto& [source, entries] : sources_) {
    result r;
    r.ip = ip;
    r.zone = source;
    for (const auto& e : entries) {
      if (e.range.contains(ip)) {
        r.listed = true;
        r.response_code = e.code;
        break;
      }
    }
    if (!r.listed) r.note = "nxdomain";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace hostguard::reputation
