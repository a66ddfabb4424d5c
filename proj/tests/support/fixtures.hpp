#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace hgtest {

namespace fs = std::filesystem;

/// Directory removed on destruction.
class temp_dir {
 public:
  explicit temp_dir(const std::string& tag = "hg");
  ~temp_dir();
  temp_dir(const temp_dir&) = delete;
  temp_dir& operator=(const temp_dir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

fs::path data_dir();

void write(const fs::path& p, const std::string& content, unsigned mode = 0644);
std::string slurp(const fs::path& p);

/// Benign CMS-like tree: `core` files at the top levels and `addons`
/// files under components/. Files are PHP, JS, CSS, HTML, text, JSON and
/// PNG, all 0644, directories 0755. Returns the relative paths written.
std::vector<std::string> make_benign_tree(const fs::path& root, std::uint32_t seed = 7, int core = 400,
                                          int addons = 100);

/// Every regular file below root, counted with a plain recursive iterator.
std::vector<std::string> list_files(const fs::path& root);

std::string random_bytes(std::mt19937_64& rng, std::size_t n);

}  // namespace hgtest
