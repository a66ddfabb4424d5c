#include <httplib.h>

#include <thread>

#include "cli_internal.hpp"
#include "hostguard/cli.hpp"
#include "hostguard/error.hpp"

namespace hostguard::cli_detail {

namespace {

struct host_port {
  std::string host;
  int port = 0;
};

host_port parse_host_port(const std::string& s, const char* what) {
  auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) throw error(errc::config_error, std::string(what) + " must be host:port");
  host_port hp;
  hp.host = s.substr(0, colon);
  if (hp.host.size() > 2 && hp.host.front() == '[' && hp.host.back() == ']') hp.host = hp.host.substr(1, hp.host.size() - 2);
  try {
    std::size_t used = 0;
    hp.port = std::stoi(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1 || hp.port < 0 || hp.port > 65535) throw std::out_of_range("port");
  } catch (const std::exception&) {
    throw error(errc::config_error, std::string(what) + " has a bad port: " + s);
  }
  return hp;
}

// Multipart text fields arrive decoded; re-encode them so the pipeline sees
// the same raw form as a urlencoded body.
std::string percent_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char ch : s) {
    if (std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.' || ch == '~') {
      out.push_back(static_cast<char>(ch));
    } else {
      out.push_back('%');
      out.push_back(hex[ch >> 4]);
      out.push_back(hex[ch & 15]);
    }
  }
  return out;
}

const std::set<std::string> hop_by_hop{"connection", "keep-alive",        "proxy-authenticate", "proxy-authorization",
                                       "te",         "trailer",           "transfer-encoding",  "upgrade",
                                       "host",       "content-length",    "x-hostguard-login"};

// Origin hook for login outcomes: the site answers a login POST with
// `X-HostGuard-Login: success|failure`.
constexpr const char* login_header = "X-HostGuard-Login";

gateway::request_record to_record(const httplib::Request& req) {
  gateway::request_record r;
  auto ip = net::parse_ip(req.remote_addr);
  if (!ip) throw error(errc::invalid_request, "remote address does not parse: " + req.remote_addr);
  r.source_ip = *ip;
  r.method = req.method;
  auto q = req.target.find('?');
  r.path = req.target.substr(0, q);
  if (q != std::string::npos) r.query_params = gateway::parse_query_string(std::string_view(req.target).substr(q + 1));
  for (const auto& [k, v] : req.headers) {
    if (k == "REMOTE_ADDR" || k == "REMOTE_PORT" || k == "LOCAL_ADDR" || k == "LOCAL_PORT") continue;
    r.headers.emplace_back(k, v);
  }
  if (req.get_header_value("Content-Type").find("application/x-www-form-urlencoded") == 0)
    r.body_params = gateway::parse_query_string(req.body);
  for (const auto& [field, part] : req.files) {
    if (part.filename.empty()) {
      r.body_params.emplace_back(field, percent_encode(part.content));
      continue;
    }
    gateway::upload_part u;
    u.field = field;
    u.filename = part.filename;
    u.size = part.content.size();
    u.first_bytes = part.content.substr(0, gateway::upload_prefix_bytes);
    r.uploads.push_back(std::move(u));
  }
  r.received_at = now_ms();
  return r;
}

}  // namespace

int cmd_serve(const config& c, const serve_options& o, std::ostream& out, std::ostream& err) {
  auto listen = parse_host_port(o.listen, "listen");
  if (o.upstream.empty()) throw error(errc::config_error, "gateway.upstream is not configured");
  auto upstream = parse_host_port(o.upstream, "upstream");
  if (c.signature_path.empty()) throw error(errc::config_error, "paths.signatures is not configured");
  if (c.verdict_log.empty() || c.block_log.empty())
    throw error(errc::config_error, "paths.verdict_log and paths.block_log (or paths.state_dir) are required");
  for (const auto& log : {c.verdict_log, c.block_log}) {
    std::error_code ec;
    if (!fs::is_directory(log.parent_path(), ec))
      throw error(errc::config_error, "log directory missing: " + log.parent_path().string());
  }

  std::mutex err_mu;
  auto rt = make_gateway(c, o.mode, true, err, [&](const gateway::verdict& v) {
    append_line_durable(c.block_log, v.to_json());
  });
  auto& gw = *rt->gw;
  std::atomic<std::uint64_t> served{0};

  httplib::Server server;
  server.set_payload_max_length(64 * 1024 * 1024);
  auto handle = [&](const httplib::Request& req, httplib::Response& res) {
    ++served;
    gateway::request_record rec;
    try {
      rec = to_record(req);
    } catch (const error&) {
      res.status = 400;
      res.set_content("bad request\n", "text/plain");
      return;
    }
    auto v = gw.evaluate(rec);
    try {
      append_line_durable(c.verdict_log, v.to_json());
    } catch (const error& e) {
      std::lock_guard lk(err_mu);
      err << "warning: verdict log write failed: " << e.what() << "\n";
    }
    if (v.dec != gateway::decision::allow) {
      res.status = v.dec == gateway::decision::block ? 403 : 429;
      res.set_content(gateway::render_warning(v), "text/html; charset=utf-8");
      return;
    }

    httplib::Client client(upstream.host, upstream.port);
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    httplib::Headers headers;
    for (const auto& [k, val] : req.headers) {
      if (hop_by_hop.count(to_lower(k)) || k == "REMOTE_ADDR" || k == "REMOTE_PORT" || k == "LOCAL_ADDR" ||
          k == "LOCAL_PORT")
        continue;
      headers.emplace(k, val);
    }
    headers.emplace("X-Forwarded-For", req.remote_addr);
    httplib::Result up;
    if (req.is_multipart_form_data()) {
      httplib::MultipartFormDataItems items;
      for (const auto& [field, part] : req.files) items.push_back({field, part.content, part.filename, part.content_type});
      headers.erase("Content-Type");
      if (req.method == "PUT") up = client.Put(req.target, headers, items);
      else up = client.Post(req.target, headers, items);
    } else {
      httplib::Request fwd;
      fwd.method = req.method;
      fwd.path = req.target;
      fwd.headers = headers;
      fwd.body = req.body;
      up = client.send(fwd);
    }
    if (!up) {
      res.status = 502;
      res.set_content("upstream unavailable\n", "text/plain");
      std::lock_guard lk(err_mu);
      err << "warning: upstream request failed: " << httplib::to_string(up.error()) << "\n";
      return;
    }
    if (gw.is_login_attempt(rec) && up->has_header(login_header)) {
      auto outcome = to_lower(up->get_header_value(login_header));
      if (outcome == "success" || outcome == "failure")
        gw.note_login(rec.source_ip,
                      outcome == "success" ? gateway::login_outcome::success : gateway::login_outcome::failure,
                      now_ms());
    }
    res.status = up->status;
    for (const auto& [k, val] : up->headers)
      if (!hop_by_hop.count(to_lower(k)) && !iequals(k, "Content-Type")) res.headers.emplace(k, val);
    res.set_content(up->body, up->get_header_value("Content-Type").empty() ? "application/octet-stream"
                                                                            : up->get_header_value("Content-Type"));
  };
  const std::string any = "(.*)";
  server.Get(any, handle);
  server.Post(any, handle);
  server.Put(any, handle);
  server.Patch(any, handle);
  server.Delete(any, handle);
  server.Options(any, handle);

  int port = listen.port;
  if (port == 0) {
    port = server.bind_to_any_port(listen.host);
    if (port < 0) throw error(errc::config_error, "cannot bind " + o.listen);
  } else if (!server.bind_to_port(listen.host, port)) {
    throw error(errc::config_error, "cannot bind " + o.listen);
  }

  signal_scope signals;
  std::thread watcher([&] {
    while (!stop_requested().load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  });
  out << "listening on " << listen.host << ":" << port << " -> " << upstream.host << ":" << upstream.port << " ("
      << (o.mode == gateway::mode::maintenance ? "maintenance" : "production") << ")\n"
      << std::flush;
  server.listen_after_bind();
  stop_requested().store(true);
  watcher.join();
  out << "stopped after " << served.load() << " requests\n" << std::flush;
  return exit_clean;
}

}  // namespace hostguard::cli_detail
