#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mosden {

struct Url {
  std::string scheme;
  std::string host;
  int port = 80;
  std::string path; ///< always starts with '/'

  /// `scheme://host:port`
  std::string origin() const;
};

/// Accepts `http://host[:port][/path]` only. Throws BadEndpoint.
Url parse_url(std::string_view text);

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type = "application/json";
};

struct HttpTimeouts {
  std::chrono::milliseconds connect{1000};
  std::chrono::milliseconds read{5000};
};

/// Plain HTTP/1.1 client calls; nullopt means the request never got a
/// response (connection refused, timeout, ...).
std::optional<HttpResponse> http_get(const Url& base, const std::string& path_and_query,
                                     HttpTimeouts timeouts = {});
std::optional<HttpResponse> http_post(const Url& base, const std::string& path, const std::string& body,
                                      HttpTimeouts timeouts = {});
std::optional<HttpResponse> http_delete(const Url& base, const std::string& path, HttpTimeouts timeouts = {});

std::string url_encode(std::string_view s);

struct HttpRequest {
  std::string method;
  std::string path;
  std::vector<std::string> captures; ///< regex groups of the matched route
  std::multimap<std::string, std::string> params;
  std::string body;

  std::optional<std::string> param(const std::string& name) const;
};

using HttpHandler = std::function<HttpResponse(const HttpRequest&)>;

/// Small threaded HTTP/1.1 server. Routes are ECMAScript regexes matched
/// against the whole path.
class HttpServer {
public:
  HttpServer();
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  void route(const std::string& method, const std::string& pattern, HttpHandler handler);
  /// Binds and starts serving on a background thread; port 0 picks a free
  /// one. Returns the bound port. Throws IoError.
  int start(const std::string& host, int port);
  void stop();
  int port() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace mosden
