#pragma once

#include <sys/types.h>

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hgtest {

/// Child process with stdout piped back and stderr to a temp file.
class child {
 public:
  child(const std::string& exe, const std::vector<std::string>& args, const std::map<std::string, std::string>& env = {});
  ~child();
  child(const child&) = delete;
  child& operator=(const child&) = delete;

  /// Next stdout line, or nullopt on EOF or timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);
  void signal(int sig);
  /// Exit status (or 128 + signal); drains remaining stdout into `rest`.
  int wait(std::string* rest = nullptr);
  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
  bool reaped_ = false;
};

/// Runs to completion and returns {exit status, stdout}.
std::pair<int, std::string> run(const std::string& exe, const std::vector<std::string>& args,
                                const std::map<std::string, std::string>& env = {});

}  // namespace hgtest
