#include "mosden/registry.hpp"

#include <fstream>
#include <iterator>

#include "mosden/errors.hpp"
#include "mosden/log.hpp"
#include "mosden/server.hpp"

namespace fs = std::filesystem;

namespace mosden {

Json to_json(const RegistryRecord& r) {
  Json j = to_json(r.descriptor);
  j["node_base_url"] = r.node_base_url;
  j["last_seen"] = r.last_seen;
  return j;
}

RegistryRecord registry_record_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("", "expected an object");
  RegistryRecord r;
  Json d = j;
  try {
    r.node_base_url = d.at("node_base_url").get<std::string>();
    r.last_seen = d.at("last_seen").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("", e.what());
  }
  d.erase("node_base_url");
  d.erase("last_seen");
  r.descriptor = descriptor_from_json(d);
  return r;
}

void UserRequest::validate() const {
  if (duration_ms <= 0) throw InvariantError("/duration_ms", "must be > 0");
  if (interval_ms <= 0) throw InvariantError("/interval_ms", "must be > 0");
}

Json to_json(const UserRequest& r) {
  Json j = Json::object();
  j["id"] = r.id;
  Json criteria = Json::object();
  for (const auto& [k, v] : r.criteria) criteria[k] = v;
  j["criteria"] = std::move(criteria);
  if (r.window) j["window"] = to_json(*r.window);
  if (!r.aggregations.empty()) j["aggregations"] = to_json(r.aggregations);
  j["interval_ms"] = r.interval_ms;
  j["duration_ms"] = r.duration_ms;
  j["payload"] = to_string(r.payload);
  return j;
}

UserRequest user_request_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("", "request must be an object");
  UserRequest r;
  for (const auto& [key, value] : j.items()) {
    const std::string ptr = "/" + key;
    if (key == "id") {
      if (!value.is_string()) throw SchemaError(ptr, "expected a string");
      r.id = value.get<std::string>();
    } else if (key == "criteria") {
      if (!value.is_object()) throw SchemaError(ptr, "expected an object of strings");
      for (const auto& [k, v] : value.items()) {
        if (!v.is_string()) throw SchemaError(ptr + "/" + k, "expected a string");
        r.criteria[k] = v.get<std::string>();
      }
    } else if (key == "window") {
      r.window = window_from_json(value, ptr);
    } else if (key == "aggregations") {
      r.aggregations = aggregations_from_json(value, ptr);
    } else if (key == "interval_ms" || key == "duration_ms") {
      if (!value.is_number_integer()) throw SchemaError(ptr, "expected an integer");
      (key == "interval_ms" ? r.interval_ms : r.duration_ms) = value.get<std::int64_t>();
    } else if (key == "payload") {
      auto p = value.is_string() ? value.get<std::string>() : "";
      if (p == "processed") r.payload = PayloadKind::Processed;
      else if (p == "raw") r.payload = PayloadKind::Raw;
      else throw SchemaError(ptr, "expected \"processed\" or \"raw\"");
    } else {
      throw SchemaError(ptr, "unknown key");
    }
  }
  if (!j.contains("duration_ms")) throw SchemaError("/duration_ms", "missing required key");
  r.validate();
  return r;
}

bool matches(const std::map<std::string, std::string>& criteria, const SensorDescriptor& d) {
  for (const auto& [key, want] : criteria) {
    if (key == "node_id") {
      if (d.node_id != want) return false;
    } else if (key == "vs_name") {
      if (d.vs_name != want) return false;
    } else {
      auto it = d.metadata.find(key);
      if (it == d.metadata.end() || it->second != want) return false;
    }
  }
  return true;
}

Json to_json(const DispatchResult& r) {
  Json j = Json::object();
  j["request_id"] = r.request_id;
  j["subscription_ids"] = r.subscription_ids;
  Json failures = Json::array();
  for (const auto& f : r.failures) {
    Json fj = Json::object();
    fj["node_id"] = f.node_id;
    fj["vs_name"] = f.vs_name;
    fj["error"] = f.error;
    failures.push_back(std::move(fj));
  }
  j["failures"] = std::move(failures);
  return j;
}

std::string_view to_string(IngestOutcome o) {
  switch (o) {
  case IngestOutcome::Stored: return "stored";
  case IngestOutcome::Duplicate: return "duplicate";
  case IngestOutcome::Quarantined: return "quarantined";
  }
  return "?";
}

Registry::Registry(std::optional<fs::path> data_dir, std::shared_ptr<Clock> clock, std::int64_t liveness_ms)
    : data_dir_(std::move(data_dir)), clock_(std::move(clock)), liveness_ms_(liveness_ms) {
  if (data_dir_) {
    fs::create_directories(*data_dir_ / "results");
    load();
  }
}

void Registry::register_sensors(const std::string& node_id, const std::string& base_url,
                                const std::vector<SensorDescriptor>& descriptors) {
  if (node_id.empty()) throw InvariantError("/node_id", "must be non-empty");
  parse_url(base_url);
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    descriptors[i].validate();
    if (descriptors[i].node_id != node_id) {
      throw InvariantError("/descriptors/" + std::to_string(i) + "/node_id", "does not match the registering node");
    }
  }
  const auto now = clock_->now_ms();
  {
    std::unique_lock lock(mu_);
    for (auto& [key, rec] : records_) {
      if (key.first == node_id) {
        rec.last_seen = now;
        rec.node_base_url = base_url;
      }
    }
    for (const auto& d : descriptors) records_[{node_id, d.vs_name}] = RegistryRecord{d, base_url, now};
  }
  snapshot();
}

std::vector<RegistryRecord> Registry::records() const {
  std::shared_lock lock(mu_);
  std::vector<RegistryRecord> out;
  for (const auto& [key, rec] : records_) out.push_back(rec);
  return out;
}

std::vector<RegistryRecord> Registry::match(const UserRequest& r) const {
  const auto now = clock_->now_ms();
  std::shared_lock lock(mu_);
  std::vector<RegistryRecord> out;
  for (const auto& [key, rec] : records_) {
    if (now - rec.last_seen <= liveness_ms_ && matches(r.criteria, rec.descriptor)) out.push_back(rec);
  }
  return out;
}

DispatchResult Registry::dispatch(UserRequest r, const std::string& ingest_url) {
  r.validate();
  {
    std::unique_lock lock(mu_);
    if (r.id.empty()) {
      do {
        r.id = "r" + std::to_string(next_request_++);
      } while (requests_.count(r.id));
    }
  }
  auto matched = match(r);
  if (matched.empty()) throw NoMatch("no live sensor satisfies the request criteria");

  DispatchResult result;
  result.request_id = r.id;
  const auto expiry = clock_->now_ms() + r.duration_ms;
  for (const auto& rec : matched) {
    Subscription sub;
    sub.vs_name = rec.descriptor.vs_name;
    sub.mode = SubscriptionMode::Push;
    sub.delivery_endpoint = ingest_url;
    sub.interval_ms = r.interval_ms;
    sub.expiry = expiry;
    sub.payload = r.payload;
    sub.window = r.window;
    sub.aggregations = r.aggregations;
    sub.idempotency_key = r.id + "/" + rec.descriptor.vs_name;
    Json body = to_json(sub);
    body.erase("id");
    body.erase("created_at");
    std::string error;
    try {
      auto url = parse_url(rec.node_base_url);
      auto res = http_post(url, "/subscriptions", body.dump());
      if (!res) {
        error = "node unreachable at " + rec.node_base_url;
      } else if (res->status != 201 && res->status != 200) {
        error = "status " + std::to_string(res->status) + ": " + res->body;
      } else {
        auto id = parse_json(res->body).at("id").get<std::string>();
        result.subscription_ids.push_back(id);
        std::unique_lock lock(mu_);
        sub_to_request_[id] = r.id;
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    if (!error.empty()) {
      log().warn("dispatch of {} to {}/{} failed: {}", r.id, rec.descriptor.node_id, rec.descriptor.vs_name, error);
      result.failures.push_back({rec.descriptor.node_id, rec.descriptor.vs_name, error});
    }
  }
  {
    std::unique_lock lock(mu_);
    auto& state = requests_[r.id];
    state.request = r;
    for (const auto& id : result.subscription_ids) {
      if (std::find(state.subscriptions.begin(), state.subscriptions.end(), id) == state.subscriptions.end()) {
        state.subscriptions.push_back(id);
      }
    }
  }
  snapshot();
  return result;
}

IngestOutcome Registry::ingest(const PushDelivery& d) {
  const auto line = to_json(d).dump();
  std::unique_lock lock(mu_);
  auto sit = sub_to_request_.find(d.subscription_id);
  if (sit == sub_to_request_.end()) {
    ++quarantined_;
    lock.unlock();
    if (data_dir_) append_line(*data_dir_ / "results" / "quarantine.jsonl", line);
    log().warn("quarantined delivery {} #{}", d.subscription_id, d.sequence_no);
    return IngestOutcome::Quarantined;
  }
  auto& state = requests_.at(sit->second);
  if (!state.seen.emplace(d.subscription_id, d.sequence_no).second) {
    ++duplicates_;
    return IngestOutcome::Duplicate;
  }
  state.results.push_back(to_json(d));
  // Appends stay under the lock so each request's log keeps arrival order.
  if (data_dir_) append_line(*data_dir_ / "results" / (sit->second + ".jsonl"), line);
  return IngestOutcome::Stored;
}

std::vector<Json> Registry::results(const std::string& request_id) const {
  std::shared_lock lock(mu_);
  auto it = requests_.find(request_id);
  if (it == requests_.end()) throw UnknownRequest("no request '" + request_id + "'");
  return it->second.results;
}

std::optional<std::string> Registry::request_for(const std::string& subscription_id) const {
  std::shared_lock lock(mu_);
  auto it = sub_to_request_.find(subscription_id);
  if (it == sub_to_request_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Registry::quarantined() const {
  std::shared_lock lock(mu_);
  return quarantined_;
}

std::uint64_t Registry::duplicates() const {
  std::shared_lock lock(mu_);
  return duplicates_;
}

void Registry::append_line(const fs::path& file, const std::string& line) const {
  std::lock_guard lock(log_mu_);
  std::ofstream out(file, std::ios::app);
  if (!out) {
    log().error("cannot append to {}", file.string());
    return;
  }
  out << line << '\n';
}

void Registry::snapshot() const {
  if (!data_dir_) return;
  Json j = Json::object();
  {
    std::shared_lock lock(mu_);
    Json records = Json::array();
    for (const auto& [key, rec] : records_) records.push_back(to_json(rec));
    j["records"] = std::move(records);
    Json requests = Json::object();
    for (const auto& [id, st] : requests_) {
      Json rj = Json::object();
      rj["request"] = to_json(st.request);
      rj["subscriptions"] = st.subscriptions;
      requests[id] = std::move(rj);
    }
    j["requests"] = std::move(requests);
    j["next_request"] = next_request_;
  }
  std::lock_guard lock(log_mu_);
  const auto path = *data_dir_ / "registry.json";
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) {
      log().error("cannot write {}", tmp.string());
      return;
    }
    out << j.dump(2);
  }
  fs::rename(tmp, path);
}

void Registry::load() {
  const auto path = *data_dir_ / "registry.json";
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    auto j = parse_json(text);
    for (const auto& rj : j.at("records")) {
      auto rec = registry_record_from_json(rj);
      records_[{rec.descriptor.node_id, rec.descriptor.vs_name}] = rec;
    }
    for (const auto& [id, rj] : j.at("requests").items()) {
      auto& st = requests_[id];
      st.request = user_request_from_json(rj.at("request"));
      st.subscriptions = rj.at("subscriptions").get<std::vector<std::string>>();
      for (const auto& s : st.subscriptions) sub_to_request_[s] = id;
      // Rebuild results and the dedup set from the request's log.
      std::ifstream log_in(*data_dir_ / "results" / (id + ".jsonl"));
      std::string line;
      while (std::getline(log_in, line)) {
        if (line.empty()) continue;
        auto d = parse_json(line);
        st.seen.emplace(d.at("subscription_id").get<std::string>(), d.at("sequence_no").get<std::uint64_t>());
        st.results.push_back(std::move(d));
      }
    }
    next_request_ = j.value("next_request", std::uint64_t{1});
    log().info("registry restored {} records, {} requests", records_.size(), requests_.size());
  } catch (const std::exception& e) {
    log().error("{}: cannot restore registry snapshot: {}", path.string(), e.what());
  }
}

// --- server ---------------------------------------------------------------

RegistryServer::RegistryServer(Registry& registry) : registry_(registry) {
  http_.route("GET", "/healthz", [](const HttpRequest&) {
    Json j = Json::object();
    j["status"] = "ok";
    return json_response(200, j);
  });

  http_.route("POST", "/registry/sensors", [this](const HttpRequest& req) {
    return guarded_handler([&] {
      auto j = parse_json(req.body);
      if (!j.is_object()) throw SchemaError("", "expected an object");
      auto node_id = j.value("node_id", "");
      auto base_url = j.value("base_url", "");
      std::vector<SensorDescriptor> descriptors;
      if (auto it = j.find("descriptors"); it != j.end()) {
        if (!it->is_array()) throw SchemaError("/descriptors", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
          descriptors.push_back(descriptor_from_json((*it)[i], "/descriptors/" + std::to_string(i)));
        }
      }
      registry_.register_sensors(node_id, base_url, descriptors);
      Json out = Json::object();
      out["ok"] = true;
      out["registered"] = descriptors.size();
      return json_response(200, out);
    });
  });

  http_.route("GET", "/registry/sensors", [this](const HttpRequest&) {
    return guarded_handler([&] {
      // Grouped by node: {node_id: [record, ...]}
      Json out = Json::object();
      for (const auto& rec : registry_.records()) {
        auto& group = out[rec.descriptor.node_id];
        if (group.is_null()) group = Json::array();
        group.push_back(to_json(rec));
      }
      return json_response(200, out);
    });
  });

  http_.route("POST", "/registry/requests", [this](const HttpRequest& req) {
    return guarded_handler([&] {
      auto request = user_request_from_json(parse_json(req.body));
      return json_response(201, to_json(registry_.dispatch(std::move(request), ingest_url())));
    });
  });

  http_.route("GET", R"(/registry/requests/([^/]+)/results)", [this](const HttpRequest& req) {
    return guarded_handler([&] {
      Json arr = Json::array();
      for (auto& r : registry_.results(req.captures.at(0))) arr.push_back(std::move(r));
      return json_response(200, arr);
    });
  });

  http_.route("POST", "/registry/ingest", [this](const HttpRequest& req) {
    return guarded_handler([&] {
      auto outcome = registry_.ingest(delivery_from_json(parse_json(req.body)));
      Json out = Json::object();
      out["ok"] = true;
      out["outcome"] = to_string(outcome);
      return json_response(200, out);
    });
  });
}

RegistryServer::~RegistryServer() { stop(); }

int RegistryServer::start(const std::string& host, int port) {
  host_ = host == "0.0.0.0" ? "127.0.0.1" : host;
  const int bound = http_.start(host, port);
  log().info("registry listening on {}", base_url());
  return bound;
}

void RegistryServer::stop() { http_.stop(); }

std::string RegistryServer::base_url() const { return "http://" + host_ + ":" + std::to_string(http_.port()); }

} // namespace mosden
