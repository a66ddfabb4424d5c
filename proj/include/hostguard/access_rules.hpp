#pragma once

#include <string>
#include <vector>

namespace hostguard::access_rules {

struct directive {
  std::string name;
  std::vector<std::string> args;  // unquoted
  std::vector<std::string> blocks;  // enclosing sections, outermost first
  int line = 0;
};

struct document {
  std::vector<directive> directives;

  /// True when a RewriteRule with the F flag matches `rel_path` (no leading
  /// slash), taking RewriteEngine state into account. RewriteCond lines are
  /// not evaluated.
  bool forbids(std::string_view rel_path) const;
};

/// Parses the subset of Apache per-directory configuration the toolkit
/// emits and commonly meets: sections IfModule, Files, FilesMatch, Limit,
/// LimitExcept; directives such as RewriteEngine, RewriteCond, RewriteRule,
/// Options, Require, Order, Allow, Deny, Header, php_flag, php_value,
/// SetHandler, AddHandler, RemoveHandler, AddType, ErrorDocument,
/// DirectoryIndex. Anything else raises errc::access_rule_parse_error.
document parse(std::string_view text);

}  // namespace hostguard::access_rules
