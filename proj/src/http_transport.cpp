#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "citeval/gateway.hpp"

namespace citeval {

namespace {

HttpReply to_reply(const httplib::Result& res) {
  HttpReply reply;
  if (!res) {
    auto err = res.error();
    reply.failure = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                     err == httplib::Error::Write)
                        ? TransportFailure::kTimeout
                        : TransportFailure::kConnection;
    reply.failure_message = httplib::to_string(err);
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

httplib::Headers to_headers(const HttpRequest& r) {
  httplib::Headers h;
  for (const auto& [k, v] : r.headers) {
    if (k == "Content-Type") continue;
    h.emplace(k, v);
  }
  return h;
}

httplib::Client make_client(const std::string& origin, std::chrono::seconds timeout) {
  httplib::Client cli(origin);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  return cli;
}

}  // namespace

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::kConfigInvalid, "URL without scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpReply HttpTransport::post(const HttpRequest& request) {
  auto [origin, path] = split_url(request.url);
  auto cli = make_client(origin, timeout_);
  std::string content_type = "application/json";
  for (const auto& [k, v] : request.headers)
    if (k == "Content-Type") content_type = v;
  return to_reply(cli.Post(path, to_headers(request), request.body, content_type));
}

HttpReply HttpTransport::get(const HttpRequest& request) {
  auto [origin, path] = split_url(request.url);
  auto cli = make_client(origin, timeout_);
  return to_reply(cli.Get(path, to_headers(request)));
}

}  // namespace citeval
