#include <gtest/gtest.h>

#include <arpa/inet.h>

#include <cstring>
#include <random>

#include "hostguard/error.hpp"
#include "hostguard/net.hpp"
#include "hostguard/reputation.hpp"

using namespace hostguard;
using namespace hostguard::net;

TEST(NetAddress, ParsesAndPrints) {
  EXPECT_EQ(parse_ip("203.0.113.7")->to_string(), "203.0.113.7");
  EXPECT_TRUE(parse_ip("203.0.113.7")->is_v4());
  EXPECT_EQ(parse_ip("203.0.113.7")->v4(), 0xcb007107u);
  EXPECT_EQ(parse_ip("2001:DB8::1")->to_string(), "2001:db8::1");
  EXPECT_FALSE(parse_ip("2001:db8::1")->is_v4());
  for (const char* bad : {"", "1.2.3", "1.2.3.256", "1.2.3.4.5", "01x.1.1.1", "::g", "1.2.3.4 ", "2001:db8:::1"})
    EXPECT_FALSE(parse_ip(bad)) << bad;
}

// inet_pton is the reference for both families.
TEST(NetAddress, AgreesWithInetPton) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    unsigned char b[16];
    for (auto& x : b) x = static_cast<unsigned char>(rng());
    char text[INET6_ADDRSTRLEN];
    ASSERT_NE(inet_ntop(AF_INET6, b, text, sizeof text), nullptr);
    auto a = parse_ip(text);
    ASSERT_TRUE(a) << text;
    EXPECT_EQ(0, std::memcmp(a->bytes.data(), b, 16)) << text;

    char t4[INET_ADDRSTRLEN];
    ASSERT_NE(inet_ntop(AF_INET, b, t4, sizeof t4), nullptr);
    auto v4 = parse_ip(t4);
    ASSERT_TRUE(v4) << t4;
    EXPECT_EQ(v4->to_string(), t4);
  }
}

TEST(NetCidr, ContainmentAndBounds) {
  auto c = *parse_cidr("198.51.100.77/24");
  EXPECT_EQ(c.to_string(), "198.51.100.0/24");
  EXPECT_TRUE(c.contains(*parse_ip("198.51.100.0")));
  EXPECT_TRUE(c.contains(*parse_ip("198.51.100.255")));
  EXPECT_FALSE(c.contains(*parse_ip("198.51.101.0")));
  EXPECT_FALSE(c.contains(*parse_ip("::ffff:c633:6501") /* 198.51.101.1 */));
  EXPECT_FALSE(c.contains(*parse_ip("2001:db8::1")));
  auto host = *parse_cidr("192.0.2.1");
  EXPECT_EQ(host.first(), host.last());
  auto v6 = *parse_cidr("2001:db8:1::/48");
  EXPECT_TRUE(v6.contains(*parse_ip("2001:db8:1:ffff::1")));
  EXPECT_FALSE(v6.contains(*parse_ip("2001:db8:2::")));
  for (const char* bad : {"10.0.0.0/33", "2001:db8::/129", "10.0.0.0/", "10.0.0.0/x", "/8"}) EXPECT_FALSE(parse_cidr(bad)) << bad;
}

TEST(NetReverse, DnsblNames) {
  EXPECT_EQ(reverse_name(*parse_ip("203.0.113.7")), "7.113.0.203");
  EXPECT_EQ(reverse_name(*parse_ip("2001:db8::1")),
            "1.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.0.8.b.d.0.1.0.0.2");
}

TEST(Reputation, QueryWireFormat) {
  auto q = reputation::build_query(0x1234, "7.113.0.203.zen.test");
  const std::string expected = std::string("\x12\x34\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00", 12) +
                               std::string("\x01" "7" "\x03" "113" "\x01" "0" "\x03" "203" "\x03" "zen" "\x04" "test", 21) +
                               std::string("\x00\x00\x01\x00\x01", 5);
  EXPECT_EQ(q, expected);
}

TEST(Reputation, ZonesAndEndpoints) {
  EXPECT_TRUE(reputation::valid_zone("zen.spamhaus.org"));
  EXPECT_TRUE(reputation::valid_zone("dnsbl.tornevall.org"));
  for (const char* bad : {"", "bad zone", "-a.test", "a..test", "a.test.", "a/b.test"}) EXPECT_FALSE(reputation::valid_zone(bad)) << bad;
  auto e = reputation::parse_endpoint("127.0.0.1:5353");
  ASSERT_TRUE(e);
  EXPECT_EQ(e->port, 5353);
  EXPECT_EQ(reputation::parse_endpoint("[::1]:53")->addr.to_string(), "::1");
  EXPECT_EQ(reputation::parse_endpoint("9.9.9.9")->port, 53);
  EXPECT_FALSE(reputation::parse_endpoint("127.0.0.1:99999"));
  EXPECT_FALSE(reputation::parse_endpoint("resolver.example"));
}

TEST(Reputation, FixtureResolver) {
  auto f = reputation::fixture_resolver::parse("# c\nspamhaus,203.0.113.0/24,127.0.0.2\nsafebrowsing,198.51.100.23,127.0.0.3\n");
  auto rs = f->check(*parse_ip("203.0.113.9"));
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].zone, "safebrowsing");
  EXPECT_FALSE(rs[0].listed);
  EXPECT_EQ(rs[1].zone, "spamhaus");
  EXPECT_TRUE(rs[1].listed);
  EXPECT_EQ(rs[1].response_code->to_string(), "127.0.0.2");
  EXPECT_THROW(reputation::fixture_resolver::parse("spamhaus,203.0.113.0/24,10.0.0.1\n"), error);
  EXPECT_THROW(reputation::fixture_resolver::parse("spamhaus,203.0.113.0/24\n"), error);
}
