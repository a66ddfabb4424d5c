#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hostguard {

enum class errc {
  // signatures
  malformed_signature_file,
  duplicate_id,
  pattern_compile_error,
  root_not_found,
  // integrity
  unreadable_file,
  manifest_tampered,
  malformed_manifest,
  already_quarantined,
  store_unavailable,
  unknown_entry,
  not_held,
  target_occupied,
  not_a_regular_file,
  // hardening
  config_parse_error,
  cred_doc_parse_error,
  invalid_policy,
  // bloomset
  invalid_parameters,
  malformed_bloom,
  // gateway
  state_unavailable,
  maintenance_token_unset,
  invalid_request,
  invalid_address,
  malformed_geo_table,
  access_rule_parse_error,
  precondition_violated,
  // monitor
  stream_unreadable,
  insufficient_data,
  missing_feature,
  sitemap_parse_error,
  sink_unavailable,
  // cli
  config_error,
  io_error,
};

std::string_view to_string(errc code);

/// Every failure surfaced by the library. The code is stable and is what
/// tests and the CLI branch on; the message carries context for humans.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace hostguard
