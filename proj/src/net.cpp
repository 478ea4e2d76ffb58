#include "mosden/net.hpp"

#include <charconv>
#include <thread>

#include <httplib.h>

#include "mosden/errors.hpp"

namespace mosden {

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

Url parse_url(std::string_view text) {
  constexpr std::string_view prefix = "http://";
  if (text.substr(0, prefix.size()) != prefix) throw BadEndpoint("only http:// URLs are supported: '" + std::string(text) + "'");
  Url url;
  url.scheme = "http";
  auto rest = text.substr(prefix.size());
  auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  url.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  if (authority.empty()) throw BadEndpoint("missing host in '" + std::string(text) + "'");
  auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    auto port_text = authority.substr(colon + 1);
    int port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port < 1 || port > 65535) {
      throw BadEndpoint("bad port in '" + std::string(text) + "'");
    }
    url.port = port;
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw BadEndpoint("missing host in '" + std::string(text) + "'");
  for (char c : authority) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) {
      throw BadEndpoint("bad host in '" + std::string(text) + "'");
    }
  }
  url.host = std::string(authority);
  return url;
}

namespace {

httplib::Client make_client(const Url& base, HttpTimeouts timeouts) {
  httplib::Client client(base.host, base.port);
  client.set_connection_timeout(timeouts.connect);
  client.set_read_timeout(timeouts.read);
  client.set_write_timeout(timeouts.read);
  client.set_keep_alive(false);
  return client;
}

std::optional<HttpResponse> convert(const httplib::Result& res) {
  if (!res) return std::nullopt;
  return HttpResponse{res->status, res->body};
}

} // namespace

std::optional<HttpResponse> http_get(const Url& base, const std::string& path_and_query, HttpTimeouts timeouts) {
  auto client = make_client(base, timeouts);
  return convert(client.Get(path_and_query));
}

std::optional<HttpResponse> http_post(const Url& base, const std::string& path, const std::string& body,
                                      HttpTimeouts timeouts) {
  auto client = make_client(base, timeouts);
  return convert(client.Post(path, body, "application/json"));
}

std::optional<HttpResponse> http_delete(const Url& base, const std::string& path, HttpTimeouts timeouts) {
  auto client = make_client(base, timeouts);
  return convert(client.Delete(path));
}

std::string url_encode(std::string_view s) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == ':') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

std::optional<std::string> HttpRequest::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

struct HttpServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

HttpServer::HttpServer() : impl_(std::make_unique<Impl>()) {
  impl_->server.set_keep_alive_max_count(1);
  impl_->server.set_read_timeout(5, 0);
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::route(const std::string& method, const std::string& pattern, HttpHandler handler) {
  auto wrapped = [method, handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = method;
    r.path = req.path;
    for (std::size_t i = 1; i < req.matches.size(); ++i) r.captures.push_back(req.matches[i]);
    for (const auto& [k, v] : req.params) r.params.emplace(k, v);
    r.body = req.body;
    auto out = handler(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  auto& s = impl_->server;
  if (method == "GET") s.Get(pattern, wrapped);
  else if (method == "POST") s.Post(pattern, wrapped);
  else if (method == "DELETE") s.Delete(pattern, wrapped);
  else if (method == "PUT") s.Put(pattern, wrapped);
  else throw BadRequest("unsupported method " + method);
}

int HttpServer::start(const std::string& host, int port) {
  auto& s = impl_->server;
  if (port == 0) {
    impl_->port = s.bind_to_any_port(host);
  } else {
    impl_->port = s.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HttpServer::stop() {
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

int HttpServer::port() const { return impl_->port; }

} // namespace mosden
