#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "hostguard/error.hpp"
#include "hostguard/regex.hpp"

using hostguard::errc;
using hostguard::error;
using hostguard::regex;

namespace {

std::optional<std::pair<std::size_t, std::size_t>> find(const char* pat, std::string_view text,
                                                        bool ci = false) {
  auto m = regex::compile(pat, ci).search(text);
  if (!m) return std::nullopt;
  return std::make_pair(m->begin, m->end);
}

errc compile_error(const char* pat) {
  try {
    regex::compile(pat);
  } catch (const error& e) {
    return e.code();
  }
  return errc::io_error;
}

}  // namespace

TEST(Regex, Literals) {
  EXPECT_EQ(find("eval", "x = eval(1)"), std::make_pair(std::size_t{4}, std::size_t{8}));
  EXPECT_FALSE(find("eval", "x = EVAL(1)"));
  EXPECT_TRUE(find("eval", "x = EVAL(1)", true));
}

TEST(Regex, LeftmostFirstAlternation) {
  EXPECT_EQ(find("ab|abc", "xabc"), std::make_pair(std::size_t{1}, std::size_t{3}));
  EXPECT_EQ(find("abc|ab", "xabc"), std::make_pair(std::size_t{1}, std::size_t{4}));
}

TEST(Regex, GreedyAndLazy) {
  EXPECT_EQ(find("a.*b", "aXbYb"), std::make_pair(std::size_t{0}, std::size_t{5}));
  EXPECT_EQ(find("a.*?b", "aXbYb"), std::make_pair(std::size_t{0}, std::size_t{3}));
  EXPECT_EQ(find("a{2,3}", "caaaa"), std::make_pair(std::size_t{1}, std::size_t{4}));
  EXPECT_EQ(find("a{2,}", "caaaa"), std::make_pair(std::size_t{1}, std::size_t{5}));
  EXPECT_EQ(find("a{2}", "caaaa"), std::make_pair(std::size_t{1}, std::size_t{3}));
}

TEST(Regex, ClassesAndEscapes) {
  EXPECT_TRUE(find("[A-Za-z0-9+/]{8,}={0,2}", "data: QUJDREVGR0g= tail"));
  EXPECT_TRUE(find("\\$_(GET|POST)\\[", "$x = $_POST['c'];"));
  EXPECT_TRUE(find("\\x41\\d\\s", "zzA1 "));
  EXPECT_FALSE(find("[^a-z]", "abc"));
  EXPECT_TRUE(find("[^a-z]", "ABC", false));
  EXPECT_FALSE(find("[^a-z]", "ABC", true));
  EXPECT_TRUE(find("[]x]", "]"));
  EXPECT_TRUE(find("a{x", "a{x"));
}

TEST(Regex, Anchors) {
  EXPECT_TRUE(find("^<\\?php", "<?php echo"));
  EXPECT_FALSE(find("^<\\?php", " <?php echo"));
  EXPECT_TRUE(find("end$", "the end"));
  EXPECT_FALSE(find("end$", "the end."));
  EXPECT_TRUE(find("\\bcurl\\b", "curl/7.68.0"));
  EXPECT_FALSE(find("\\bcurl\\b", "xcurlx"));
}

TEST(Regex, RejectsUnsupportedConstructs) {
  EXPECT_EQ(compile_error("(a)\\1"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("(?=a)b"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("a*"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("(a"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("a)"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("[a-"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("*a"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("a{1001}"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error("\\q"), errc::pattern_compile_error);
  EXPECT_EQ(compile_error(""), errc::pattern_compile_error);
}

TEST(Regex, FindAllIsNonOverlapping) {
  auto re = regex::compile("aa");
  auto all = re.find_all(hostguard::as_bytes("aaaaa"));
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].begin, 0u);
  EXPECT_EQ(all[1].begin, 2u);
}

// A classic catastrophic-backtracking pattern stays linear.
TEST(Regex, PathologicalPatternIsFast) {
  auto re = regex::compile("(a+)+b");
  std::string text(200000, 'a');
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_FALSE(re.search(text));
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  EXPECT_LT(ms.count(), 2000);
}

// Differential check against std::regex (ECMAScript, leftmost-first) on
// random short texts over a small alphabet.
TEST(Regex, AgreesWithStdRegexOnRandomInputs) {
  const char* patterns[] = {"ab*c", "(a|b)+c", "a.?b", "[ab]{2,3}c?", "(ab|a)(bc|c)", "b+?a", "c(a|b)*?c"};
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> len(0, 12), ch(0, 2);
  for (const char* p : patterns) {
    auto re = regex::compile(p);
    std::regex ref(p);
    for (int i = 0; i < 400; ++i) {
      std::string s;
      int n = len(rng);
      for (int k = 0; k < n; ++k) s.push_back(static_cast<char>('a' + ch(rng)));
      std::smatch m;
      bool ref_found = std::regex_search(s, m, ref);
      auto got = re.search(s);
      ASSERT_EQ(ref_found, got.has_value()) << p << " on " << s;
      if (ref_found) {
        EXPECT_EQ(static_cast<std::size_t>(m.position(0)), got->begin) << p << " on " << s;
        EXPECT_EQ(static_cast<std::size_t>(m.position(0) + m.length(0)), got->end) << p << " on " << s;
      }
    }
  }
}

// Word boundaries and prefilter skips; alphabet includes separators so
// starts are skipped and boundary assertions fail at many positions.
TEST(Regex, AgreesWithStdRegexOnBoundaries) {
  const char* patterns[] = {"\\b(ab|b)c", "\\bb+", "a\\b", "\\Bb", "(c|\\bab)\\s*a", "\\b(ca|ab|b)\\s*\\(?a"};
  const char alphabet[] = {'a', 'b', 'c', ' ', '\n', '('};
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> len(0, 16), ch(0, 5);
  for (const char* p : patterns) {
    auto re = regex::compile(p);
    std::regex ref(p);
    for (int i = 0; i < 1500; ++i) {
      std::string s;
      int n = len(rng);
      for (int k = 0; k < n; ++k) s.push_back(alphabet[ch(rng)]);
      std::smatch m;
      bool ref_found = std::regex_search(s, m, ref);
      auto got = re.search(s);
      ASSERT_EQ(ref_found, got.has_value()) << p << " on [" << s << "]";
      if (ref_found) {
        EXPECT_EQ(static_cast<std::size_t>(m.position(0)), got->begin) << p << " on [" << s << "]";
        EXPECT_EQ(static_cast<std::size_t>(m.position(0) + m.length(0)), got->end) << p << " on [" << s << "]";
      }
    }
  }
}
