#pragma once

#include <bitset>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hostguard/util.hpp"

namespace hostguard {

/// Byte-oriented regular expressions matched by a Pike VM: time is
/// O(len(text) * len(program)) for every pattern, so hostile patterns or
/// hostile content cannot trigger catastrophic backtracking.
///
/// Dialect:
///   literals, `.` (any byte but `\n`), `[...]` / `[^...]` with ranges,
///   `\d \D \w \W \s \S`, `\t \n \r \f \v \xHH`, escaped punctuation,
///   `(...)` and `(?:...)` (both non-capturing), `|`,
///   `* + ? {n} {n,} {n,m}` with lazy `?` suffix (n, m <= 1000),
///   `^` / `$` anchor at the start / end of the scanned buffer,
///   `\b \B` word boundaries.
/// Backreferences, lookaround, inline flags, and patterns that can match
/// the empty string are rejected with errc::pattern_compile_error.
/// Case folding is ASCII-only.
class regex {
 public:
  struct match {
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  /// An empty regex never matches.
  regex() = default;
  static regex compile(std::string_view pattern, bool case_insensitive = false);
  /// Parses only; accepts patterns that can match the empty string.
  static void check_syntax(std::string_view pattern);

  /// Leftmost match starting at or after `from` (leftmost-first among
  /// alternatives, like Perl).
  std::optional<match> search(bytes_view text, std::size_t from = 0) const;
  std::optional<match> search(std::string_view text, std::size_t from = 0) const {
    return search(as_bytes(text), from);
  }
  /// Non-overlapping leftmost matches scanning left to right.
  std::vector<match> find_all(bytes_view text) const;
  bool contains_match(std::string_view text) const { return search(text).has_value(); }

  const std::string& pattern() const noexcept { return pattern_; }
  bool case_insensitive() const noexcept { return case_insensitive_; }
  std::size_t program_size() const noexcept { return prog_.size(); }

  enum class op : unsigned char { byte_set, split, jmp, assert_pos, match };
  enum class assertion : unsigned char { text_begin, text_end, word_boundary, not_word_boundary };

  struct inst {
    op code;
    int x = 0;  // byte_set: set index; split: preferred target; jmp: target; assert: kind
    int y = 0;  // split: other target
  };

 private:
  std::string pattern_;
  bool case_insensitive_ = false;
  std::vector<inst> prog_;
  std::vector<std::bitset<256>> sets_;
  std::bitset<256> first_bytes_;
};

}  // namespace hostguard
