#include "hostguard/regex.hpp"

#include <cctype>
#include <memory>

#include "hostguard/error.hpp"

namespace hostguard {

namespace {

constexpr int max_repeat = 1000;
constexpr std::size_t max_program = 50'000;

struct node {
  enum kind_t { set, cat, alt, star, plus, quest, repeat, assert_pos } kind;
  std::vector<std::unique_ptr<node>> kids;
  std::bitset<256> bytes;
  regex::assertion where = regex::assertion::text_begin;
  bool greedy = true;
  int min = 0;
  int max = 0;  // -1: unbounded

  explicit node(kind_t k) : kind(k) {}
};

using node_ptr = std::unique_ptr<node>;

bool is_word(unsigned char c) { return std::isalnum(c) || c == '_'; }

std::bitset<256> class_digit() {
  std::bitset<256> b;
  for (int c = '0'; c <= '9'; ++c) b.set(c);
  return b;
}
std::bitset<256> class_word() {
  std::bitset<256> b;
  for (int c = 0; c < 256; ++c) {
    if (is_word(static_cast<unsigned char>(c))) b.set(c);
  }
  return b;
}
std::bitset<256> class_space() {
  std::bitset<256> b;
  for (int c : {' ', '\t', '\n', '\r', '\f', '\v'}) b.set(c);
  return b;
}

class parser {
 public:
  parser(std::string_view p, bool ci) : pat_(p), ci_(ci) {}

  node_ptr parse() {
    auto n = parse_alt();
    if (pos_ != pat_.size()) fail("unmatched ')'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw error(errc::pattern_compile_error, why + " at offset " + std::to_string(pos_));
  }

  bool eof() const { return pos_ >= pat_.size(); }
  char peek() const { return pat_[pos_]; }

  node_ptr make_set(std::bitset<256> b) {
    if (ci_) {
      for (int c = 'a'; c <= 'z'; ++c) {
        if (b.test(c) || b.test(c - 32)) {
          b.set(c);
          b.set(c - 32);
        }
      }
    }
    auto n = std::make_unique<node>(node::set);
    n->bytes = b;
    return n;
  }

  node_ptr parse_alt() {
    auto first = parse_cat();
    if (eof() || peek() != '|') return first;
    auto alt = std::make_unique<node>(node::alt);
    alt->kids.push_back(std::move(first));
    while (!eof() && peek() == '|') {
      ++pos_;
      alt->kids.push_back(parse_cat());
    }
    return alt;
  }

  node_ptr parse_cat() {
    auto cat = std::make_unique<node>(node::cat);
    while (!eof() && peek() != '|' && peek() != ')') {
      cat->kids.push_back(parse_repeat());
    }
    return cat;
  }

  bool parse_count(int& out) {
    std::size_t start = pos_;
    long v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      if (v > 100000) fail("repeat count too large");
      ++pos_;
    }
    out = static_cast<int>(v);
    return pos_ > start;
  }

  node_ptr parse_repeat() {
    auto atom = parse_atom();
    while (!eof()) {
      char c = peek();
      node_ptr q;
      if (c == '*' || c == '+' || c == '?') {
        ++pos_;
        q = std::make_unique<node>(c == '*' ? node::star : c == '+' ? node::plus : node::quest);
      } else if (c == '{') {
        std::size_t save = pos_;
        ++pos_;
        int lo = 0, hi = 0;
        if (!parse_count(lo)) {
          pos_ = save;
          break;  // literal '{'
        }
        if (!eof() && peek() == ',') {
          ++pos_;
          if (!parse_count(hi)) hi = -1;
        } else {
          hi = lo;
        }
        if (eof() || peek() != '}') {
          pos_ = save;
          break;
        }
        ++pos_;
        if (lo > max_repeat || hi > max_repeat) fail("repeat count exceeds 1000");
        if (hi != -1 && hi < lo) fail("repeat range is inverted");
        q = std::make_unique<node>(node::repeat);
        q->min = lo;
        q->max = hi;
      } else {
        break;
      }
      if (atom->kind == node::assert_pos) fail("quantifier applied to an assertion");
      if (!eof() && peek() == '?') {
        ++pos_;
        q->greedy = false;
      }
      q->kids.push_back(std::move(atom));
      atom = std::move(q);
    }
    return atom;
  }

  int parse_hex_escape() {
    // after "\x"
    if (pos_ + 2 > pat_.size()) fail("truncated \\x escape");
    int v = 0;
    for (int i = 0; i < 2; ++i) {
      char c = pat_[pos_++];
      int d = std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
              : (c >= 'a' && c <= 'f')                     ? c - 'a' + 10
              : (c >= 'A' && c <= 'F')                     ? c - 'A' + 10
                                                           : -1;
      if (d < 0) fail("bad \\x escape");
      v = v * 16 + d;
    }
    return v;
  }

  // Escape inside or outside a class. Returns true and fills `set` for
  // class escapes; otherwise fills `literal`.
  bool parse_escape(std::bitset<256>& set, int& literal, bool in_class) {
    if (eof()) fail("trailing backslash");
    char c = pat_[pos_++];
    switch (c) {
      case 'd': set = class_digit(); return true;
      case 'D': set = ~class_digit(); return true;
      case 'w': set = class_word(); return true;
      case 'W': set = ~class_word(); return true;
      case 's': set = class_space(); return true;
      case 'S': set = ~class_space(); return true;
      case 't': literal = '\t'; return false;
      case 'n': literal = '\n'; return false;
      case 'r': literal = '\r'; return false;
      case 'f': literal = '\f'; return false;
      case 'v': literal = '\v'; return false;
      case 'x': literal = parse_hex_escape(); return false;
      default: break;
    }
    if (c >= '1' && c <= '9') fail("backreferences are not supported");
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (!in_class && (c == 'b' || c == 'B')) {
        // handled by caller
        --pos_;
        literal = -1;
        return false;
      }
      fail(std::string("unknown escape \\") + c);
    }
    literal = static_cast<unsigned char>(c);
    return false;
  }

  node_ptr parse_class() {
    // after '['
    bool negate = false;
    if (!eof() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    std::bitset<256> acc;
    bool first = true;
    while (true) {
      if (eof()) fail("unterminated character class");
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      int lo;
      ++pos_;
      if (c == '\\') {
        std::bitset<256> s;
        int lit = 0;
        if (parse_escape(s, lit, true)) {
          acc |= s;
          continue;
        }
        lo = lit;
      } else {
        lo = static_cast<unsigned char>(c);
      }
      if (pos_ + 1 < pat_.size() && peek() == '-' && pat_[pos_ + 1] != ']') {
        ++pos_;
        char h = pat_[pos_++];
        int hi;
        if (h == '\\') {
          std::bitset<256> s;
          int lit = 0;
          if (parse_escape(s, lit, true)) fail("class escape used as range bound");
          hi = lit;
        } else {
          hi = static_cast<unsigned char>(h);
        }
        if (hi < lo) fail("inverted class range");
        for (int b = lo; b <= hi; ++b) acc.set(static_cast<std::size_t>(b));
      } else {
        acc.set(static_cast<std::size_t>(lo));
      }
    }
    if (ci_) {
      // fold before negation so [^a] excludes both cases
      for (int ch = 'a'; ch <= 'z'; ++ch) {
        if (acc.test(ch) || acc.test(ch - 32)) {
          acc.set(ch);
          acc.set(ch - 32);
        }
      }
    }
    if (negate) acc = ~acc;
    auto n = std::make_unique<node>(node::set);
    n->bytes = acc;
    return n;
  }

  node_ptr parse_atom() {
    if (eof()) fail("unexpected end of pattern");
    char c = pat_[pos_++];
    switch (c) {
      case '(': {
        if (!eof() && peek() == '?') {
          if (pos_ + 1 < pat_.size() && pat_[pos_ + 1] == ':') {
            pos_ += 2;
          } else {
            fail("lookaround and inline flags are not supported");
          }
        }
        auto inner = parse_alt();
        if (eof() || peek() != ')') fail("missing ')'");
        ++pos_;
        return inner;
      }
      case ')': fail("unmatched ')'");
      case '[': return parse_class();
      case '*':
      case '+':
      case '?': fail("quantifier without operand");
      case '.': {
        std::bitset<256> b;
        b.set();
        b.reset('\n');
        auto n = std::make_unique<node>(node::set);
        n->bytes = b;
        return n;
      }
      case '^':
      case '$': {
        auto n = std::make_unique<node>(node::assert_pos);
        n->where = c == '^' ? regex::assertion::text_begin : regex::assertion::text_end;
        return n;
      }
      case '\\': {
        std::bitset<256> s;
        int lit = 0;
        if (parse_escape(s, lit, false)) return make_set(s);
        if (lit == -1) {
          char b = pat_[pos_++];
          auto n = std::make_unique<node>(node::assert_pos);
          n->where = b == 'b' ? regex::assertion::word_boundary
                              : regex::assertion::not_word_boundary;
          return n;
        }
        std::bitset<256> one;
        one.set(static_cast<std::size_t>(lit));
        return make_set(one);
      }
      default: {
        std::bitset<256> one;
        one.set(static_cast<unsigned char>(c));
        return make_set(one);
      }
    }
  }

  std::string_view pat_;
  bool ci_;
  std::size_t pos_ = 0;
};

bool nullable(const node& n) {
  switch (n.kind) {
    case node::set: return false;
    case node::assert_pos: return true;
    case node::cat:
      for (auto& k : n.kids) {
        if (!nullable(*k)) return false;
      }
      return true;
    case node::alt:
      for (auto& k : n.kids) {
        if (nullable(*k)) return true;
      }
      return false;
    case node::star:
    case node::quest: return true;
    case node::plus: return nullable(*n.kids[0]);
    case node::repeat: return n.min == 0 || nullable(*n.kids[0]);
  }
  return true;
}

class compiler {
 public:
  std::vector<regex::inst> prog;
  std::vector<std::bitset<256>> sets;

  void emit_node(const node& n) {
    if (prog.size() > max_program) {
      throw error(errc::pattern_compile_error, "pattern expands beyond program size limit");
    }
    using op = regex::op;
    switch (n.kind) {
      case node::set: {
        sets.push_back(n.bytes);
        prog.push_back({op::byte_set, static_cast<int>(sets.size() - 1), 0});
        return;
      }
      case node::assert_pos:
        prog.push_back({op::assert_pos, static_cast<int>(n.where), 0});
        return;
      case node::cat:
        for (auto& k : n.kids) emit_node(*k);
        return;
      case node::alt: {
        std::vector<std::size_t> jumps;
        for (std::size_t i = 0; i < n.kids.size(); ++i) {
          if (i + 1 < n.kids.size()) {
            std::size_t sp = prog.size();
            prog.push_back({op::split, static_cast<int>(sp + 1), 0});
            emit_node(*n.kids[i]);
            jumps.push_back(prog.size());
            prog.push_back({op::jmp, 0, 0});
            prog[sp].y = static_cast<int>(prog.size());
          } else {
            emit_node(*n.kids[i]);
          }
        }
        for (auto j : jumps) prog[j].x = static_cast<int>(prog.size());
        return;
      }
      case node::star: emit_star(*n.kids[0], n.greedy); return;
      case node::plus: {
        std::size_t start = prog.size();
        emit_node(*n.kids[0]);
        std::size_t sp = prog.size();
        prog.push_back({op::split, 0, 0});
        set_split(sp, static_cast<int>(start), static_cast<int>(sp + 1), n.greedy);
        return;
      }
      case node::quest: {
        std::size_t sp = prog.size();
        prog.push_back({op::split, 0, 0});
        emit_node(*n.kids[0]);
        set_split(sp, static_cast<int>(sp + 1), static_cast<int>(prog.size()), n.greedy);
        return;
      }
      case node::repeat: {
        for (int i = 0; i < n.min; ++i) emit_node(*n.kids[0]);
        if (n.max == -1) {
          emit_star(*n.kids[0], n.greedy);
          return;
        }
        std::vector<std::size_t> splits;
        for (int i = n.min; i < n.max; ++i) {
          splits.push_back(prog.size());
          prog.push_back({op::split, 0, 0});
          emit_node(*n.kids[0]);
        }
        int end = static_cast<int>(prog.size());
        for (auto sp : splits) set_split(sp, static_cast<int>(sp + 1), end, n.greedy);
        return;
      }
    }
  }

 private:
  void set_split(std::size_t sp, int body, int out, bool greedy) {
    prog[sp].x = greedy ? body : out;
    prog[sp].y = greedy ? out : body;
  }

  void emit_star(const node& body, bool greedy) {
    using op = regex::op;
    std::size_t sp = prog.size();
    prog.push_back({op::split, 0, 0});
    emit_node(body);
    prog.push_back({op::jmp, static_cast<int>(sp), 0});
    set_split(sp, static_cast<int>(sp + 1), static_cast<int>(prog.size()), greedy);
  }
};

// Ordered thread list with O(1) membership by pc (sparse set).
struct thread_list {
  struct entry {
    int pc;
    std::size_t start;
  };
  std::vector<entry> items;
  std::vector<std::uint32_t> mark;
  std::uint32_t gen = 1;

  explicit thread_list(std::size_t n) : mark(n, 0) { items.reserve(n); }
  void clear() {
    items.clear();
    if (++gen == 0) {
      std::fill(mark.begin(), mark.end(), 0);
      gen = 1;
    }
  }
  bool visit(int pc) {
    if (mark[static_cast<std::size_t>(pc)] == gen) return false;
    mark[static_cast<std::size_t>(pc)] = gen;
    return true;
  }
};

}  // namespace

void regex::check_syntax(std::string_view pattern) {
  parser p(pattern, false);
  p.parse();
}

regex regex::compile(std::string_view pattern, bool case_insensitive) {
  if (pattern.empty()) throw error(errc::pattern_compile_error, "empty pattern");
  parser p(pattern, case_insensitive);
  auto ast = p.parse();
  if (nullable(*ast)) {
    throw error(errc::pattern_compile_error, "pattern can match the empty string");
  }
  compiler c;
  c.emit_node(*ast);
  c.prog.push_back({op::match, 0, 0});

  regex r;
  r.pattern_ = std::string(pattern);
  r.case_insensitive_ = case_insensitive;
  r.prog_ = std::move(c.prog);
  r.sets_ = std::move(c.sets);

  // Bytes that can start a match: follow epsilon edges from pc 0, treating
  // assertions as pass-through (they only narrow the set).
  std::vector<bool> seen(r.prog_.size(), false);
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int pc = stack.back();
    stack.pop_back();
    if (seen[static_cast<std::size_t>(pc)]) continue;
    seen[static_cast<std::size_t>(pc)] = true;
    const auto& in = r.prog_[static_cast<std::size_t>(pc)];
    switch (in.code) {
      case op::byte_set: r.first_bytes_ |= r.sets_[static_cast<std::size_t>(in.x)]; break;
      case op::split:
        stack.push_back(in.x);
        stack.push_back(in.y);
        break;
      case op::jmp: stack.push_back(in.x); break;
      case op::assert_pos: stack.push_back(pc + 1); break;
      case op::match: break;
    }
  }
  return r;
}

std::optional<regex::match> regex::search(bytes_view text, std::size_t from) const {
  const std::size_t n = text.size();
  if (from >= n) return std::nullopt;

  thread_list clist(prog_.size()), nlist(prog_.size());
  std::vector<int> stack;
  stack.reserve(prog_.size());

  auto assertion_holds = [&](assertion a, std::size_t pos) {
    switch (a) {
      case assertion::text_begin: return pos == 0;
      case assertion::text_end: return pos == n;
      case assertion::word_boundary:
      case assertion::not_word_boundary: {
        bool before = pos > 0 && is_word(text[pos - 1]);
        bool after = pos < n && is_word(text[pos]);
        return (before != after) == (a == assertion::word_boundary);
      }
    }
    return false;
  };

  // Depth-first epsilon closure preserving priority order.
  auto add_thread = [&](thread_list& list, int pc0, std::size_t pos, std::size_t start) {
    stack.clear();
    stack.push_back(pc0);
    while (!stack.empty()) {
      int pc = stack.back();
      stack.pop_back();
      if (!list.visit(pc)) continue;
      const auto& in = prog_[static_cast<std::size_t>(pc)];
      switch (in.code) {
        case op::jmp: stack.push_back(in.x); break;
        case op::split:
          stack.push_back(in.y);
          stack.push_back(in.x);
          break;
        case op::assert_pos:
          if (assertion_holds(static_cast<assertion>(in.x), pos)) stack.push_back(pc + 1);
          break;
        case op::byte_set:
        case op::match: list.items.push_back({pc, start}); break;
      }
    }
  };

  std::optional<match> found;
  std::size_t pos = from;
  while (true) {
    if (!found) {
      if (clist.items.empty()) {
        // Marks left by failed assertions belong to an earlier position.
        clist.clear();
        while (pos < n && !first_bytes_.test(text[pos])) ++pos;
        if (pos >= n) break;
      }
      if (pos < n && first_bytes_.test(text[pos])) add_thread(clist, 0, pos, pos);
    }
    if (clist.items.empty()) {
      // A start thread can die on an assertion; keep scanning unless done.
      if (found || pos >= n) break;
      ++pos;
      continue;
    }
    nlist.clear();
    for (const auto& t : clist.items) {
      const auto& in = prog_[static_cast<std::size_t>(t.pc)];
      if (in.code == op::match) {
        found = match{t.start, pos};
        break;  // lower-priority threads are cut off
      }
      if (pos < n && sets_[static_cast<std::size_t>(in.x)].test(text[pos])) {
        add_thread(nlist, t.pc + 1, pos + 1, t.start);
      }
    }
    if (pos >= n) break;
    std::swap(clist, nlist);
    ++pos;
  }
  return found;
}

std::vector<regex::match> regex::find_all(bytes_view text) const {
  std::vector<match> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto m = search(text, pos);
    if (!m) break;
    out.push_back(*m);
    pos = m->end > m->begin ? m->end : m->begin + 1;
  }
  return out;
}

}  // namespace hostguard
