#pragma once

#include <atomic>
#include <memory>
#include <ostream>

#include "hostguard/config.hpp"
#include "hostguard/gateway.hpp"
#include "hostguard/reputation.hpp"

namespace hostguard::cli_detail {

/// Everything a gateway instance borrows, owned in one place.
struct gateway_runtime {
  signatures::signature_set sigs;
  std::optional<geo::range_table> geo;
  std::vector<std::unique_ptr<reputation::resolver>> resolvers;
  std::unique_ptr<gateway::blacklist> list;
  gateway::echo_challenge challenges;
  std::unique_ptr<gateway::gateway> gw;
};

/// `live` adds the DNS resolver and the persistent blacklist store; replay
/// stays offline and in memory so its output depends on the trace only.
std::unique_ptr<gateway_runtime> make_gateway(const config& c, gateway::mode m, bool live, std::ostream& err,
                                              std::function<void(const gateway::verdict&)> block_log);

/// Set from SIGINT/SIGTERM while a long-running command is active.
std::atomic<bool>& stop_requested();

/// Installs SIGINT/SIGTERM handlers for its lifetime.
class signal_scope {
 public:
  signal_scope();
  ~signal_scope();
  signal_scope(const signal_scope&) = delete;
  signal_scope& operator=(const signal_scope&) = delete;
};

struct serve_options {
  std::string listen;
  std::string upstream;
  gateway::mode mode = gateway::mode::production;
};

int cmd_serve(const config& c, const serve_options& o, std::ostream& out, std::ostream& err);

}  // namespace hostguard::cli_detail
