#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hgtest {

/// In-process UDP DNS responder on 127.0.0.1 with scripted answers per
/// query name. Names without a script get NXDOMAIN.
class stub_dns {
 public:
  enum class action { answer_a, nxdomain, servfail, blackhole };
  struct rule {
    action act = action::nxdomain;
    std::uint32_t a = 0;  // host order, for answer_a
  };

  stub_dns();
  ~stub_dns();
  stub_dns(const stub_dns&) = delete;
  stub_dns& operator=(const stub_dns&) = delete;

  std::uint16_t port() const { return port_; }
  void script(const std::string& qname, rule r);
  void answer(const std::string& qname, std::uint32_t a) { script(qname, {action::answer_a, a}); }
  void blackhole(const std::string& qname) { script(qname, {action::blackhole, 0}); }
  /// Applied to names without their own rule.
  void fallback(rule r);

  /// Lowercased query names in arrival order.
  std::vector<std::string> queries() const;

 private:
  void run();

  int fd_ = -1;
  int wake_[2] = {-1, -1};
  std::uint16_t port_ = 0;
  mutable std::mutex mu_;
  std::map<std::string, rule> rules_;
  rule fallback_;
  std::vector<std::string> seen_;
  std::thread th_;
};

}  // namespace hgtest
