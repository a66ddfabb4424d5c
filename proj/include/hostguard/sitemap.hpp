#pragma once

#include <set>
#include <string>
#include <string_view>

namespace hostguard {

/// `scheme://host[...]` with a letter-led scheme and a non-empty host, no
/// whitespace or control bytes.
bool is_absolute_url(std::string_view url);

/// Extracts every `<loc>` value from a sitemap (`<urlset>` or
/// `<sitemapindex>`). XML entities are decoded and surrounding whitespace is
/// trimmed. Throws errc::sitemap_parse_error on a missing root element,
/// unbalanced `<loc>` tags, or a loc that is not an absolute URL.
std::set<std::string> parse_sitemap(std::string_view document);

}  // namespace hostguard
