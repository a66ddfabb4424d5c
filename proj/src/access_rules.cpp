#include "hostguard/access_rules.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "hostguard/error.hpp"
#include "hostguard/regex.hpp"
#include "hostguard/util.hpp"

namespace hostguard::access_rules {

namespace {

// Argument-count bounds per directive (max -1: unbounded).
const std::map<std::string, std::pair<int, int>, std::less<>>& known() {
  static const std::map<std::string, std::pair<int, int>, std::less<>> k{
      {"rewriteengine", {1, 1}}, {"rewritecond", {2, 3}},  {"rewriterule", {2, 3}},   {"rewritebase", {1, 1}},
      {"options", {1, -1}},      {"require", {1, -1}},     {"order", {1, 2}},        {"allow", {2, -1}},
      {"deny", {2, -1}},         {"header", {2, -1}},      {"php_flag", {2, 2}},     {"php_value", {2, 2}},
      {"sethandler", {1, 1}},    {"addhandler", {2, -1}},  {"removehandler", {1, -1}}, {"addtype", {2, -1}},
      {"errordocument", {2, 2}}, {"directoryindex", {1, -1}}};
  return k;
}

const std::set<std::string, std::less<>> sections{"ifmodule", "files", "filesmatch", "limit", "limitexcept"};

const std::set<std::string, std::less<>> rule_flags{
    "b",  "c",   "chain", "co", "cookie", "dpi", "e",  "env", "end",  "f",   "forbidden", "g",  "gone",
    "h",  "l",   "last",  "n",  "next",   "nc",  "nocase", "ne", "noescape", "ns", "nosubreq", "p",
    "proxy", "pt", "qsa", "qsappend", "qsd", "r", "redirect", "s", "skip", "t", "type", "or", "ornext", "nv"};

std::vector<std::string> tokenize(std::string_view line, int lineno) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::string tok;
    if (line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        char c = line[i++];
        if (c == '\\' && i < line.size() && (line[i] == '"' || line[i] == '\\')) {
          tok += line[i++];
        } else if (c == '"') {
          closed = true;
          break;
        } else {
          tok += c;
        }
      }
      if (!closed) throw error(errc::access_rule_parse_error, "line " + std::to_string(lineno) + ": unterminated quote");
    } else {
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') tok += line[i++];
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::vector<std::string> flags_of(const std::string& arg, int lineno) {
  if (arg.size() < 2 || arg.front() != '[' || arg.back() != ']') {
    throw error(errc::access_rule_parse_error, "line " + std::to_string(lineno) + ": flags must be [..]");
  }
  std::vector<std::string> out;
  for (auto& f : split_list(std::string_view(arg).substr(1, arg.size() - 2))) {
    auto name = to_lower(f.substr(0, f.find('=')));
    if (!rule_flags.count(name)) {
      throw error(errc::access_rule_parse_error, "line " + std::to_string(lineno) + ": unknown flag " + f);
    }
    out.push_back(name);
  }
  return out;
}

void check_pattern(std::string pat, int lineno) {
  if (!pat.empty() && pat[0] == '!') pat.erase(0, 1);
  if (pat.empty()) throw error(errc::access_rule_parse_error, "line " + std::to_string(lineno) + ": empty pattern");
  try {
    regex::check_syntax(pat);
  } catch (const error& e) {
    throw error(errc::access_rule_parse_error, "line " + std::to_string(lineno) + ": " + e.what());
  }
}

}  // namespace

document parse(std::string_view text) {
  document doc;
  std::vector<std::string> stack;
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (!line.empty() && line.back() == '\r') line = trim(line.substr(0, line.size() - 1));
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& why) {
      return error(errc::access_rule_parse_error, "line " + std::to_string(lineno) + ": " + why);
    };
    if (line[0] == '<') {
      if (line.back() != '>') throw fail("unterminated section tag");
      auto inner = line.substr(1, line.size() - 2);
      if (!inner.empty() && inner[0] == '/') {
        auto name = to_lower(trim(inner.substr(1)));
        if (stack.empty() || stack.back() != name) throw fail("unbalanced </" + name + ">");
        stack.pop_back();
        continue;
      }
      auto toks = tokenize(inner, lineno);
      if (toks.empty()) throw fail("empty section tag");
      auto name = to_lower(toks[0]);
      if (!sections.count(name)) throw fail("unknown section " + toks[0]);
      if (toks.size() < 2) throw fail("section " + toks[0] + " needs an argument");
      if (name == "filesmatch") check_pattern(toks[1], lineno);
      stack.push_back(name);
      continue;
    }
    auto toks = tokenize(line, lineno);
    directive d;
    d.name = toks[0];
    d.args.assign(toks.begin() + 1, toks.end());
    d.blocks = stack;
    d.line = lineno;
    auto lname = to_lower(d.name);
    auto it = known().find(lname);
    if (it == known().end()) throw fail("unknown directive " + d.name);
    int n = static_cast<int>(d.args.size());
    if (n < it->second.first || (it->second.second >= 0 && n > it->second.second)) {
      throw fail("wrong argument count for " + d.name);
    }
    if (lname == "rewriteengine") {
      auto v = to_lower(d.args[0]);
      if (v != "on" && v != "off") throw fail("RewriteEngine takes On or Off");
    } else if (lname == "rewriterule") {
      check_pattern(d.args[0], lineno);
      if (n == 3) flags_of(d.args[2], lineno);
    } else if (lname == "rewritecond") {
      if (n == 3) flags_of(d.args[2], lineno);
    } else if (lname == "php_flag") {
      bool b;
      if (!parse_bool(d.args[1], b)) throw fail("php_flag value must be on/off");
    } else if (lname == "options") {
      for (const auto& o : d.args) {
        if (o.empty()) throw fail("empty option");
      }
    }
    doc.directives.push_back(std::move(d));
  }
  if (!stack.empty()) throw error(errc::access_rule_parse_error, "unclosed <" + stack.back() + ">");
  return doc;
}

bool document::forbids(std::string_view rel_path) const {
  bool engine = false;
  for (const auto& d : directives) {
    auto lname = to_lower(d.name);
    if (lname == "rewriteengine") engine = iequals(d.args[0], "on");
    if (lname != "rewriterule" || !engine) continue;
    std::vector<std::string> flags;
    if (d.args.size() == 3) flags = flags_of(d.args[2], d.line);
    bool forbidden = std::find(flags.begin(), flags.end(), "f") != flags.end() ||
                     std::find(flags.begin(), flags.end(), "forbidden") != flags.end();
    bool nocase = std::find(flags.begin(), flags.end(), "nc") != flags.end() ||
                  std::find(flags.begin(), flags.end(), "nocase") != flags.end();
    std::string pat = d.args[0];
    bool negate = !pat.empty() && pat[0] == '!';
    if (negate) pat.erase(0, 1);
    bool hit;
    try {
      hit = regex::compile(pat, nocase).contains_match(rel_path);
    } catch (const error&) {
      continue;  // patterns our engine cannot run (empty-matching) are ignored
    }
    if (hit != negate && forbidden) return true;
  }
  return false;
}

}  // namespace hostguard::access_rules
