#pragma once

// HTTP front ends for a node, plus the JSON response helpers shared with the
// registry.

#include <exception>
#include <string>

#include "mosden/model.hpp"
#include "mosden/net.hpp"
#include "mosden/node.hpp"

namespace mosden {

HttpResponse json_response(int status, const Json& body);
/// {"error": code, "detail": message} with a status derived from the code.
HttpResponse error_response(const std::exception& e);
int http_status_for(const std::string& error_code);

/// Runs `fn`, turning exceptions into error responses.
template <class F>
HttpResponse guarded_handler(F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

/// Exposes a Node over HTTP:
///   GET    /healthz
///   GET    /sensors
///   GET    /sensors/{name}/data?mode=latest|raw|processed&window=..&since_seq=..
///   GET    /subscriptions
///   POST   /subscriptions
///   DELETE /subscriptions/{id}
///   GET    /metrics
class NodeServer {
public:
  explicit NodeServer(Node& node);
  ~NodeServer();

  /// Listens on the node's configured address and, unless the node has a
  /// public_url, advertises the bound one. Returns the port.
  int start();
  void stop();
  int port() const { return http_.port(); }
  std::string base_url() const;

private:
  Node& node_;
  HttpServer http_;
};

} // namespace mosden
