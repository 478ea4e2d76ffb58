#include "mosden/server.hpp"

#include <chrono>

#include "mosden/errors.hpp"
#include "mosden/log.hpp"

namespace mosden {

HttpResponse json_response(int status, const Json& body) { return HttpResponse{status, body.dump()}; }

int http_status_for(const std::string& code) {
  if (code == "UnknownVirtualSensor" || code == "UnknownSubscription" || code == "NoMatch" ||
      code == "UnknownRequest") {
    return 404;
  }
  if (code == "DuplicateVirtualSensor") return 409;
  if (code == "SchemaError" || code == "InvariantError" || code == "BadRequest" || code == "ExpiredOnArrival" ||
      code == "BadEndpoint" || code == "FieldNotInSchema" || code == "TypeMismatch" || code == "UnknownPlugin") {
    return 400;
  }
  return 500;
}

HttpResponse error_response(const std::exception& e) {
  Json body = Json::object();
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    body["error"] = err->code();
    body["detail"] = err->what();
    if (const auto* doc = dynamic_cast<const DocumentError*>(&e)) body["pointer"] = doc->pointer();
    return json_response(http_status_for(err->code()), body);
  }
  body["error"] = "InternalError";
  body["detail"] = e.what();
  return json_response(500, body);
}

namespace {

std::uint64_t parse_u64(const std::string& text, const char* name) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(text, &used);
    if (used != text.size() || text.front() == '-') throw std::invalid_argument(name);
    return v;
  } catch (const std::logic_error&) {
    throw BadRequest(std::string(name) + " must be a non-negative integer");
  }
}

} // namespace

NodeServer::NodeServer(Node& node) : node_(node) {
  http_.route("GET", "/healthz", [this](const HttpRequest&) {
    Json j = Json::object();
    j["status"] = "ok";
    j["node_id"] = node_.config().node_id;
    return json_response(200, j);
  });

  http_.route("GET", "/sensors", [this](const HttpRequest&) {
    return guarded_handler([&] {
      Json arr = Json::array();
      for (const auto& d : node_.list_sensors()) arr.push_back(to_json(d));
      return json_response(200, arr);
    });
  });

  http_.route("GET", R"(/sensors/([^/]+)/data)", [this](const HttpRequest& req) {
    const auto start = std::chrono::steady_clock::now();
    auto res = guarded_handler([&] {
      PullRequest pull;
      if (auto mode = req.param("mode")) pull.mode = pull_mode_from_string(*mode);
      if (auto w = req.param("window")) pull.window = parse_window_param(*w);
      if (auto s = req.param("since_seq")) pull.since_seq = parse_u64(*s, "since_seq");
      return json_response(200, node_.pull_data(req.captures.at(0), pull));
    });
    node_.record_l2_us(std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start)
                           .count());
    return res;
  });

  http_.route("GET", "/subscriptions", [this](const HttpRequest&) {
    return guarded_handler([&] {
      Json arr = Json::array();
      for (const auto& s : node_.subscriptions()) arr.push_back(to_json(s));
      return json_response(200, arr);
    });
  });

  http_.route("POST", "/subscriptions", [this](const HttpRequest& req) {
    return guarded_handler([&] {
      auto sub = node_.create_subscription(subscription_from_json(parse_json(req.body)));
      return json_response(201, to_json(sub));
    });
  });

  http_.route("DELETE", R"(/subscriptions/([^/]+))", [this](const HttpRequest& req) {
    return guarded_handler([&] {
      node_.cancel_subscription(req.captures.at(0));
      return HttpResponse{204, "", "application/json"};
    });
  });

  http_.route("GET", "/metrics", [this](const HttpRequest&) {
    return guarded_handler([&] { return json_response(200, node_.metrics()); });
  });
}

NodeServer::~NodeServer() { stop(); }

int NodeServer::start() {
  const auto& cfg = node_.config();
  const int port = http_.start(cfg.listen_host, cfg.listen_port);
  if (!cfg.public_url) node_.set_public_url(base_url());
  log().info("node {} listening on {}", cfg.node_id, base_url());
  return port;
}

void NodeServer::stop() { http_.stop(); }

std::string NodeServer::base_url() const {
  auto host = node_.config().listen_host;
  if (host == "0.0.0.0") host = "127.0.0.1";
  return "http://" + host + ":" + std::to_string(http_.port());
}

} // namespace mosden
