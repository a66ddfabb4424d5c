#include "hostguard/sitemap.hpp"

#include <cctype>

#include "hostguard/error.hpp"
#include "hostguard/util.hpp"

namespace hostguard {

bool is_absolute_url(std::string_view url) {
  auto colon = url.find("://");
  if (colon == std::string_view::npos || colon == 0) return false;
  if (!std::isalpha(static_cast<unsigned char>(url[0]))) return false;
  for (std::size_t i = 0; i < colon; ++i) {
    char c = url[i];
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return false;
  }
  auto rest = url.substr(colon + 3);
  auto host_end = rest.find_first_of("/?#");
  auto host = rest.substr(0, host_end);
  if (host.empty()) return false;
  for (unsigned char c : url) {
    if (c <= 0x20 || c == 0x7f) return false;
  }
  return true;
}

namespace {

std::string decode_entities(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 8) {
      throw error(errc::sitemap_parse_error, "bad entity reference");
    }
    auto ent = s.substr(i + 1, semi - i - 1);
    if (ent == "amp") out.push_back('&');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else throw error(errc::sitemap_parse_error, "unknown entity &" + std::string(ent) + ";");
    i = semi;
  }
  return out;
}

}  // namespace

std::set<std::string> parse_sitemap(std::string_view doc) {
  if (doc.find("<urlset") == std::string_view::npos &&
      doc.find("<sitemapindex") == std::string_view::npos) {
    throw error(errc::sitemap_parse_error, "no <urlset> or <sitemapindex> root element");
  }
  std::set<std::string> urls;
  std::size_t pos = 0;
  constexpr std::string_view open = "<loc>", close = "</loc>";
  while (true) {
    auto a = doc.find(open, pos);
    auto stray_close = doc.find(close, pos);
    if (a == std::string_view::npos) {
      if (stray_close != std::string_view::npos) throw error(errc::sitemap_parse_error, "unbalanced </loc>");
      break;
    }
    if (stray_close < a) throw error(errc::sitemap_parse_error, "unbalanced </loc>");
    auto b = doc.find(close, a + open.size());
    if (b == std::string_view::npos) throw error(errc::sitemap_parse_error, "unterminated <loc>");
    auto inner = doc.substr(a + open.size(), b - a - open.size());
    if (inner.find('<') != std::string_view::npos) {
      throw error(errc::sitemap_parse_error, "nested markup inside <loc>");
    }
    auto url = decode_entities(trim(inner));
    if (!is_absolute_url(url)) throw error(errc::sitemap_parse_error, "not an absolute URL: " + url);
    urls.insert(std::move(url));
    pos = b + close.size();
  }
  return urls;
}

}  // namespace hostguard
