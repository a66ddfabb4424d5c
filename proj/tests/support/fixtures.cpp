#include "fixtures.hpp"

#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef HOSTGUARD_DATA_DIR
#error "HOSTGUARD_DATA_DIR must be defined"
#endif

namespace hgtest {

temp_dir::temp_dir(const std::string& tag) {
  std::string templ = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (!::mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
  path_ = templ;
}

temp_dir::~temp_dir() {
  std::error_code ec;
  // Restore permissions so fixtures with mode 000 entries can be removed.
  for (auto it = fs::recursive_directory_iterator(path_, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (!it->is_symlink(ec)) ::chmod(it->path().c_str(), it->is_directory(ec) ? 0755 : 0644);
  }
  fs::remove_all(path_, ec);
}

fs::path data_dir() { return HOSTGUARD_DATA_DIR; }

void write(const fs::path& p, const std::string& content, unsigned mode) {
  fs::create_directories(p.parent_path());
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
  }
  ::chmod(p.c_str(), mode);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

namespace {

const char* const words[] = {"post",   "page",    "widget", "theme",  "menu",   "sidebar", "footer",
                             "header", "comment", "author", "media",  "gallery", "archive", "search",
                             "feed",   "option",  "user",   "session", "cache", "template"};

std::string pick(std::mt19937_64& rng) { return words[rng() % std::size(words)]; }

std::string php_file(std::mt19937_64& rng) {
  std::ostringstream s;
  s << "<?php\n/**\n * " << pick(rng) << " helpers\n */\n\n";
  int n = 2 + static_cast<int>(rng() % 5);
  for (int i = 0; i < n; ++i) {
    auto a = pick(rng), b = pick(rng);
    s << "function hg_" << a << "_" << b << "_" << i << "($" << a << ", $args = array()) {\n"
      << "  if (empty($" << a << ")) {\n    return '';\n  }\n"
      << "  $out = '<div class=\"" << b << "\">' . htmlspecialchars($" << a << ") . '</div>';\n"
      << "  return apply_filters('" << b << "_output', $out, $args);\n}\n\n";
  }
  if (rng() % 3 == 0) s << "$title = isset($_GET['title']) ? sanitize_text_field($_GET['title']) : '';\n";
  if (rng() % 4 == 0) s << "wp_mail($admin_email, 'Weekly digest', $body);\n";
  return s.str();
}

std::string js_file(std::mt19937_64& rng) {
  std::ostringstream s;
  s << "(function ($) {\n  'use strict';\n";
  int n = 2 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) {
    auto a = pick(rng);
    s << "  $('." << a << "-toggle').on('click', function (e) {\n"
      << "    e.preventDefault();\n    $(this).closest('." << a << "').toggleClass('open');\n  });\n";
  }
  if (rng() % 3 == 0) s << "  window.location.hash = '#" << pick(rng) << "';\n";
  s << "})(jQuery);\n";
  return s.str();
}

std::string css_file(std::mt19937_64& rng) {
  std::ostringstream s;
  int n = 3 + static_cast<int>(rng() % 6);
  for (int i = 0; i < n; ++i) {
    s << "." << pick(rng) << "-" << i << " {\n  margin: " << rng() % 20 << "px;\n  color: #"
      << std::hex << (rng() & 0xffffff) << std::dec << ";\n}\n";
  }
  return s.str();
}

std::string html_file(std::mt19937_64& rng) {
  std::ostringstream s;
  s << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" << pick(rng)
    << " template</title>\n<link rel=\"stylesheet\" href=\"style.css\">\n</head>\n<body>\n";
  int n = 2 + static_cast<int>(rng() % 5);
  for (int i = 0; i < n; ++i) s << "<p class=\"" << pick(rng) << "\">Lorem ipsum " << pick(rng) << ".</p>\n";
  s << "<a href=\"/" << pick(rng) << "/\">More</a>\n</body>\n</html>\n";
  return s.str();
}

std::string txt_file(std::mt19937_64& rng) {
  std::ostringstream s;
  s << "=== " << pick(rng) << " ===\nContributors: core team\nRequires at least: 4.9\n\n";
  for (int i = 0; i < 6; ++i) s << "* " << pick(rng) << " " << pick(rng) << " improvements\n";
  return s.str();
}

std::string json_file(std::mt19937_64& rng) {
  std::ostringstream s;
  s << "{\n  \"name\": \"" << pick(rng) << "\",\n  \"version\": \"" << rng() % 9 << "." << rng() % 20
    << "\",\n  \"keywords\": [\"" << pick(rng) << "\", \"" << pick(rng) << "\"]\n}\n";
  return s.str();
}

std::string png_file(std::mt19937_64& rng) {
  std::string s("\x89PNG\r\n\x1a\n\0\0\0\x0dIHDR", 16);
  s += random_bytes(rng, 64 + rng() % 512);
  return s;
}

const char* const dirs[] = {"", "includes/", "admin/", "admin/css/", "assets/js/", "assets/img/", "templates/",
                            "languages/", "lib/", "lib/vendor/"};

}  // namespace

std::vector<std::string> make_benign_tree(const fs::path& root, std::uint32_t seed, int core, int addons) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  auto emit = [&](const std::string& prefix, int i) {
    std::string base = prefix + pick(rng) + "-" + std::to_string(i);
    std::string rel, content;
    switch (i % 7) {
      case 0: rel = base + ".php"; content = php_file(rng); break;
      case 1: rel = base + ".js"; content = js_file(rng); break;
      case 2: rel = base + ".css"; content = css_file(rng); break;
      case 3: rel = base + ".html"; content = html_file(rng); break;
      case 4: rel = base + ".txt"; content = txt_file(rng); break;
      case 5: rel = base + ".json"; content = json_file(rng); break;
      default: rel = base + ".png"; content = png_file(rng); break;
    }
    write(root / rel, content, 0644);
    out.push_back(rel);
  };
  fs::create_directories(root);
  for (int i = 0; i < core; ++i) emit(dirs[rng() % std::size(dirs)], i);
  for (int i = 0; i < addons; ++i) emit("components/plugin-" + std::to_string(i % 5) + "/", core + i);
  for (auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_directory()) ::chmod(e.path().c_str(), 0755);
  }
  ::chmod(root.c_str(), 0755);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  for (auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hgtest
