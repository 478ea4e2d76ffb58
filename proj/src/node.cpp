#include "mosden/node.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>

#include "mosden/errors.hpp"
#include "mosden/log.hpp"
#include "mosden/net.hpp"
#include "mosden/sim.hpp"

namespace fs = std::filesystem;

namespace mosden {

// --- config ---------------------------------------------------------------

NodeConfig node_config_from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("node config must be a JSON object");
  NodeConfig c;
  auto path_of = [&](const char* key) -> std::optional<fs::path> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ConfigError(std::string(key) + " must be a string");
    fs::path p = it->get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  try {
    c.node_id = j.at("node_id").get<std::string>();
    if (c.node_id.empty()) throw ConfigError("node_id must be non-empty");
    if (auto it = j.find("listen"); it != j.end()) {
      auto listen = it->get<std::string>();
      auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw ConfigError("listen must be host:port");
      c.listen_host = listen.substr(0, colon);
      c.listen_port = std::stoi(listen.substr(colon + 1));
    }
    c.plugin_dir = path_of("plugin_dir");
    c.data_dir = path_of("data_dir");
    c.vsd_dir = path_of("vsd_dir");
    if (auto it = j.find("cost_model"); it != j.end()) c.cost_model = cost_parameters_from_json(*it, "/cost_model");
    if (auto it = j.find("registry_url"); it != j.end() && !it->is_null()) c.registry_url = it->get<std::string>();
    if (auto it = j.find("public_url"); it != j.end() && !it->is_null()) c.public_url = it->get<std::string>();
    if (auto it = j.find("plugin_budget_bytes"); it != j.end() && !it->is_null()) {
      c.plugin_budget_bytes = it->get<std::int64_t>();
    }
    if (auto it = j.find("plugin_timeout_ms"); it != j.end()) {
      c.host.call_timeout = std::chrono::milliseconds(it->get<std::int64_t>());
    }
    if (auto it = j.find("heartbeat_ms"); it != j.end()) c.heartbeat_ms = it->get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad node config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad listen port");
  } catch (const Error& e) {
    if (e.code() == "ConfigError") throw;
    throw ConfigError(std::string("bad node config: ") + e.what());
  }
  if (c.plugin_dir && !fs::is_directory(*c.plugin_dir)) {
    throw ConfigError("plugin_dir " + c.plugin_dir->string() + " does not exist");
  }
  if (c.vsd_dir && !fs::is_directory(*c.vsd_dir)) throw ConfigError("vsd_dir " + c.vsd_dir->string() + " does not exist");
  if (c.registry_url) {
    try {
      parse_url(*c.registry_url);
    } catch (const BadEndpoint& e) {
      throw ConfigError(std::string("registry_url: ") + e.what());
    }
  }
  return c;
}

NodeConfig load_node_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read node config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return node_config_from_json(parse_json(text), path.parent_path());
  } catch (const Error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --- delivery -------------------------------------------------------------

bool HttpDeliveryClient::post(const std::string& endpoint, const std::string& body) {
  try {
    auto url = parse_url(endpoint);
    auto res = http_post(url, url.path, body, HttpTimeouts{std::chrono::milliseconds(1000), std::chrono::milliseconds(2000)});
    return res && res->status >= 200 && res->status < 300;
  } catch (const BadEndpoint&) {
    return false;
  }
}

Json to_json(const PushDelivery& d) {
  Json j = Json::object();
  j["subscription_id"] = d.subscription_id;
  j["sequence_no"] = d.sequence_no;
  j["sent_at"] = d.sent_at;
  j["payload"] = d.payload;
  return j;
}

PushDelivery delivery_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("", "delivery must be an object");
  PushDelivery d;
  auto it = j.find("subscription_id");
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw SchemaError("/subscription_id", "expected a non-empty string");
  }
  d.subscription_id = it->get<std::string>();
  it = j.find("sequence_no");
  if (it == j.end() || !it->is_number_unsigned()) throw SchemaError("/sequence_no", "expected a non-negative integer");
  d.sequence_no = it->get<std::uint64_t>();
  it = j.find("sent_at");
  if (it == j.end() || !it->is_number_integer()) throw SchemaError("/sent_at", "expected an integer");
  d.sent_at = it->get<std::int64_t>();
  it = j.find("payload");
  if (it == j.end() || !it->is_object()) throw SchemaError("/payload", "expected an object");
  d.payload = *it;
  if (j.size() != 4) throw SchemaError("", "unexpected keys in delivery");
  return d;
}

std::string_view to_string(DeliveryOutcome o) {
  switch (o) {
  case DeliveryOutcome::Ok: return "ok";
  case DeliveryOutcome::Retried: return "retried";
  case DeliveryOutcome::Dropped: return "dropped";
  }
  return "?";
}

DeliveryReport deliver(DeliveryClient& client, const std::string& endpoint, PushDelivery& d,
                       const std::vector<std::int64_t>& backoff_ms, const Clock& clock, std::int64_t expiry,
                       const std::function<bool(std::int64_t)>& sleep) {
  for (std::size_t attempt = 0; attempt <= backoff_ms.size(); ++attempt) {
    if (attempt > 0) {
      if (!sleep(backoff_ms[attempt - 1])) break;
      const auto now = clock.now_ms();
      if (now > expiry) break;
      d.sent_at = now;
    }
    ++d.attempts;
    const auto body = to_json(d).dump();
    if (client.post(endpoint, body)) {
      return {attempt == 0 ? DeliveryOutcome::Ok : DeliveryOutcome::Retried, body.size()};
    }
  }
  return {DeliveryOutcome::Dropped, 0};
}

PullRequest::Mode pull_mode_from_string(std::string_view s) {
  if (s == "latest") return PullRequest::Mode::Latest;
  if (s == "raw") return PullRequest::Mode::Raw;
  if (s == "processed") return PullRequest::Mode::Processed;
  throw BadRequest("mode must be latest, raw or processed");
}

// --- peer plugin ----------------------------------------------------------

namespace {

/// Streams another node's virtual sensor: the first reading is the remote's
/// latest element, afterwards every element appended there, in order.
class PeerPlugin final : public Plugin {
public:
  void set_configuration(const ConfigMap& config) override {
    auto remote = config.find("remote");
    if (remote == config.end()) throw PluginRejectedConfig("remote", "missing required config key 'remote'");
    auto vs = config.find("vs_name");
    if (vs == config.end()) throw PluginRejectedConfig("vs_name", "missing required config key 'vs_name'");
    try {
      remote_ = parse_url(remote->second);
    } catch (const BadEndpoint& e) {
      throw PluginRejectedConfig("remote", e.what());
    }
    vs_name_ = vs->second;
  }

  Schema get_data_structure() override {
    auto res = http_get(remote_, "/sensors");
    if (!res || res->status != 200) throw RemoteUnreachable("cannot list sensors at " + remote_.origin());
    auto sensors = parse_json(res->body);
    for (const auto& d : sensors) {
      if (d.value("vs_name", "") == vs_name_) {
        schema_ = schema_from_json(d.at("schema"), "/schema");
        return schema_;
      }
    }
    throw RemoteUnknownVS("no virtual sensor '" + vs_name_ + "' at " + remote_.origin());
  }

  std::optional<StreamElement> get_readings() override {
    if (pending_.empty()) fetch();
    if (pending_.empty()) return std::nullopt;
    auto e = std::move(pending_.front());
    pending_.pop_front();
    return e;
  }

private:
  void fetch() {
    std::string query = "/sensors/" + vs_name_ + "/data?mode=raw&";
    query += cursor_ ? "since_seq=" + std::to_string(*cursor_) : "window=count:1";
    auto res = http_get(remote_, query);
    if (!res) throw RemoteUnreachable("no answer from " + remote_.origin());
    if (res->status == 404) throw RemoteUnknownVS("virtual sensor '" + vs_name_ + "' vanished at " + remote_.origin());
    if (res->status != 200) throw RemoteUnreachable("status " + std::to_string(res->status) + " from " + remote_.origin());
    auto body = parse_json(res->body);
    for (const auto& e : body.at("elements")) pending_.push_back(element_from_json(schema_, e));
    cursor_ = body.at("next_seq").get<std::uint64_t>();
  }

  Url remote_;
  std::string vs_name_;
  Schema schema_;
  std::optional<std::uint64_t> cursor_;
  std::deque<StreamElement> pending_;
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

SensorDescriptor make_descriptor(const std::string& node_id, const VirtualSensorDefinition& vsd,
                                 const Schema& schema, std::int64_t now) {
  SensorDescriptor d;
  d.node_id = node_id;
  d.vs_name = vsd.name;
  d.schema = schema;
  d.registered_at = now;
  std::vector<std::string> names;
  std::vector<std::string> units;
  for (const auto& f : schema) {
    names.push_back(f.name());
    if (f.unit()) units.push_back(*f.unit());
  }
  d.metadata["plugin_id"] = vsd.binding.plugin_id;
  d.metadata["fields"] = join(names, ",");
  if (!units.empty()) d.metadata["unit"] = join(units, ",");
  for (const char* key : {"type", "manufacturer", "location", "model"}) {
    if (auto it = vsd.binding.config.find(key); it != vsd.binding.config.end()) d.metadata[key] = it->second;
  }
  if (vsd.binding.plugin_id == kPeerPluginId) {
    d.metadata["source"] = vsd.binding.config.at("remote") + "/" + vsd.binding.config.at("vs_name");
  }
  if (vsd.description) d.metadata["description"] = *vsd.description;
  return d;
}

void write_file_atomically(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

} // namespace

// --- node -----------------------------------------------------------------

struct Node::VirtualSensor {
  VirtualSensorDefinition vsd;
  std::shared_ptr<StreamStore> store;
  std::unique_ptr<SamplingTask> task;
  SensorDescriptor descriptor;
  std::atomic<bool> active{true};
};

struct Node::SubscriptionState {
  Subscription sub;
  std::shared_ptr<VirtualSensor> vs;
  std::int64_t interval_ms = 1000;
  std::atomic<std::int64_t> next_due{0};
  std::mutex mu; // serializes deliveries on this subscription
  std::uint64_t last_seq = 0;
  std::uint64_t raw_cursor = 0;
  std::atomic<std::uint64_t> deliveries{0};
  std::atomic<std::uint64_t> drops{0};
  std::atomic<std::uint64_t> retries{0};
  std::atomic<bool> done{false};
  StoppableThread thread;
};

Node::Node(NodeConfig config, std::shared_ptr<Clock> clock, std::shared_ptr<DeliveryClient> delivery)
    : config_(std::move(config)), clock_(std::move(clock)), delivery_(std::move(delivery)),
      catalog_(config_.plugin_dir, clock_) {
  config_.cost_model.validate();
  register_sim_plugin(catalog_);
  catalog_.register_in_process(std::string(kPeerPluginId),
                               [](const PluginContext&) { return std::make_unique<PeerPlugin>(); });
  if (config_.plugin_dir) catalog_.rescan();
  if (config_.data_dir) fs::create_directories(*config_.data_dir);
  if (config_.public_url) public_url_ = *config_.public_url;
}

Node::~Node() { stop(); }

std::shared_ptr<Node::VirtualSensor> Node::find_vs(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = sensors_.find(name);
  return it == sensors_.end() ? nullptr : it->second;
}

std::shared_ptr<StreamStore> Node::store(const std::string& vs_name) const {
  auto vs = find_vs(vs_name);
  return vs ? vs->store : nullptr;
}

const SamplingTask* Node::task(const std::string& vs_name) const {
  auto vs = find_vs(vs_name);
  return vs ? vs->task.get() : nullptr;
}

void Node::activate(const VirtualSensorDefinition& vsd) {
  vsd.validate();
  if (auto existing = find_vs(vsd.name); existing && existing->active) {
    throw DuplicateVirtualSensor("virtual sensor '" + vsd.name + "' is already active");
  }
  if (!catalog_.contains(vsd.binding)) {
    throw UnknownPlugin("plugin '" + vsd.binding.plugin_id + "' (" + std::string(to_string(vsd.binding.transport)) +
                        ") is not available");
  }
  auto factory = catalog_.factory_for(vsd.binding, PluginContext{clock_}, config_.host);
  auto handle = std::make_unique<PluginHandle>(vsd.binding, std::move(factory), config_.host, clock_);
  handle->set_configuration(vsd.binding.config);
  const Schema schema = handle->get_data_structure();
  check_aggregations(schema, vsd.aggregations);
  handle->start();

  std::optional<fs::path> journal;
  if (config_.data_dir) journal = *config_.data_dir / (vsd.name + ".jsonl");
  auto store = std::make_shared<StreamStore>(vsd.name, schema, static_cast<std::size_t>(vsd.history_size), journal);
  if (auto replayed = store->replay_journal(); replayed > 0) {
    log().info("{}: restored {} journal rows", vsd.name, replayed);
  }

  auto vs = std::make_shared<VirtualSensor>();
  vs->vsd = vsd;
  vs->store = store;
  vs->task = std::make_unique<SamplingTask>(vsd.name, std::move(handle), store, vsd.sampling_interval_ms, clock_, l1_);
  vs->descriptor = make_descriptor(config_.node_id, vsd, schema, clock_->now_ms());
  catalog_.bind(vsd.binding.plugin_id);
  catalog_.touch(vsd.binding.plugin_id, clock_->now_ms());
  {
    std::unique_lock lock(mu_);
    sensors_[vsd.name] = vs;
  }
  if (running_) vs->task->start_thread();
  log().info("{}: activated ({} every {} ms)", vsd.name, vsd.binding.plugin_id, vsd.sampling_interval_ms);
}

void Node::deactivate(const std::string& vs_name) {
  auto vs = find_vs(vs_name);
  if (!vs || !vs->active.exchange(false)) throw UnknownVirtualSensor("no active virtual sensor '" + vs_name + "'");
  vs->task->stop();
  catalog_.touch(vs->vsd.binding.plugin_id, clock_->now_ms());
  catalog_.unbind(vs->vsd.binding.plugin_id);

  std::vector<std::shared_ptr<SubscriptionState>> cancelled;
  {
    std::unique_lock lock(mu_);
    for (auto it = subs_.begin(); it != subs_.end();) {
      if (it->second->sub.vs_name == vs_name) {
        cancelled.push_back(it->second);
        std::erase(sub_order_, it->first);
        it = subs_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : cancelled) {
    s->done = true;
    s->thread.stop();
    send_cancellation(*s, "virtual sensor deactivated");
    if (auto dir = subscription_dir()) {
      std::error_code ec;
      fs::remove(*dir / (s->sub.id + ".json"), ec);
    }
  }
  log().info("{}: deactivated, {} subscription(s) cancelled", vs_name, cancelled.size());
}

std::vector<std::pair<std::string, std::string>> Node::activate_dir(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> failures;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      std::ifstream in(file);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      activate(parse_vsd(text));
    } catch (const Error& e) {
      log().error("{}: activation failed: {} ({})", file.string(), e.what(), e.code());
      failures.emplace_back(file.string(), e.code() + ": " + e.what());
    }
  }
  return failures;
}

void Node::peer_stream(const std::string& remote_url, const std::string& remote_vs, VirtualSensorDefinition local) {
  local.binding = PluginBinding{std::string(kPeerPluginId), Transport::InProcess, {},
                                ConfigMap{{"remote", remote_url}, {"vs_name", remote_vs}}};
  activate(local);
}

std::vector<SensorDescriptor> Node::list_sensors() const {
  std::shared_lock lock(mu_);
  std::vector<SensorDescriptor> out;
  for (const auto& [name, vs] : sensors_) {
    if (vs->active) out.push_back(vs->descriptor);
  }
  return out;
}

Json Node::pull_data(const std::string& vs_name, const PullRequest& request) const {
  auto vs = find_vs(vs_name);
  if (!vs) throw UnknownVirtualSensor("no virtual sensor '" + vs_name + "'");
  const auto& schema = vs->store->schema();
  const auto now = clock_->now_ms();
  switch (request.mode) {
  case PullRequest::Mode::Latest: {
    auto latest = vs->store->latest();
    return latest ? element_to_json(schema, *latest) : Json(nullptr);
  }
  case PullRequest::Mode::Raw: {
    std::vector<StreamElement> elements;
    std::uint64_t next_seq = 0;
    if (request.since_seq) {
      auto since = vs->store->since(*request.since_seq);
      elements = std::move(since.elements);
      next_seq = since.next_seq;
    } else {
      next_seq = vs->store->total_appended();
      elements = request.window ? vs->store->query_raw(*request.window, now) : vs->store->snapshot();
    }
    Json out = Json::object();
    out["vs_name"] = vs_name;
    Json arr = Json::array();
    for (const auto& e : elements) arr.push_back(element_to_json(schema, e));
    out["elements"] = std::move(arr);
    out["next_seq"] = next_seq;
    return out;
  }
  case PullRequest::Mode::Processed:
    return to_json(vs->store->evaluate_window(request.window.value_or(vs->vsd.window), vs->vsd.aggregations, now));
  }
  return nullptr;
}

Subscription Node::create_subscription(Subscription request) {
  request.validate();
  if (request.mode == SubscriptionMode::Pull) {
    throw BadRequest("pull requests are one-shot; use GET /sensors/{name}/data");
  }
  auto vs = find_vs(request.vs_name);
  if (!vs || !vs->active) throw UnknownVirtualSensor("no active virtual sensor '" + request.vs_name + "'");
  parse_url(*request.delivery_endpoint);
  const auto now = clock_->now_ms();
  if (request.expiry <= now) {
    throw ExpiredOnArrival("expiry " + std::to_string(request.expiry) + " is not after now (" + std::to_string(now) + ")");
  }
  if (!request.aggregations.empty()) check_aggregations(vs->store->schema(), request.aggregations);

  std::unique_lock lock(mu_);
  if (request.idempotency_key) {
    for (const auto& [id, s] : subs_) {
      if (s->sub.idempotency_key == request.idempotency_key && !s->done) return s->sub;
    }
  }
  auto state = std::make_shared<SubscriptionState>();
  request.id = config_.node_id + "-s" + std::to_string(next_sub_id_++);
  request.created_at = now;
  state->sub = request;
  state->vs = vs;
  // Processed deliveries never outpace the VSD's emit rate; raw ones follow
  // the subscription's own cadence.
  state->interval_ms = request.payload == PayloadKind::Processed
                           ? std::max(request.interval_ms, vs->vsd.emit_interval_ms)
                           : request.interval_ms;
  state->next_due = mono_ms() + state->interval_ms;
  state->raw_cursor = vs->store->total_appended();
  subs_[request.id] = state;
  sub_order_.push_back(request.id);
  lock.unlock();

  persist_subscription(*state);
  if (running_) start_subscription_thread(state);
  log().info("subscription {} on {} every {} ms until {}", request.id, request.vs_name, state->interval_ms,
             request.expiry);
  return request;
}

std::vector<Subscription> Node::subscriptions() const {
  std::shared_lock lock(mu_);
  std::vector<Subscription> out;
  const auto now = clock_->now_ms();
  for (const auto& id : sub_order_) {
    const auto& s = subs_.at(id);
    if (!s->done && s->sub.expiry >= now) out.push_back(s->sub);
  }
  return out;
}

void Node::cancel_subscription(const std::string& id) {
  std::shared_ptr<SubscriptionState> state;
  {
    std::unique_lock lock(mu_);
    auto it = subs_.find(id);
    if (it == subs_.end()) throw UnknownSubscription("no subscription '" + id + "'");
    state = it->second;
    subs_.erase(it);
    std::erase(sub_order_, id);
  }
  state->done = true;
  state->thread.stop();
  if (auto dir = subscription_dir()) {
    std::error_code ec;
    fs::remove(*dir / (id + ".json"), ec);
  }
}

void Node::forget_subscription(const std::string& id) {
  {
    std::unique_lock lock(mu_);
    subs_.erase(id);
    std::erase(sub_order_, id);
  }
  if (auto dir = subscription_dir()) {
    std::error_code ec;
    fs::remove(*dir / (id + ".json"), ec);
  }
}

void Node::run_delivery(SubscriptionState& s) {
  std::lock_guard lock(s.mu);
  const auto wall_start = std::chrono::steady_clock::now();
  const auto due = s.next_due.load();
  const auto now = clock_->now_ms();
  if (now > s.sub.expiry) {
    s.done = true;
    return;
  }
  Json payload = Json::object();
  bool send = true;
  if (s.sub.payload == PayloadKind::Processed) {
    const auto& window = s.sub.window ? *s.sub.window : s.vs->vsd.window;
    const auto& aggs = s.sub.aggregations.empty() ? s.vs->vsd.aggregations : s.sub.aggregations;
    payload["kind"] = "processed";
    payload["result"] = to_json(s.vs->store->evaluate_window(window, aggs, now));
  } else {
    auto since = s.vs->store->since(s.raw_cursor);
    s.raw_cursor = since.next_seq;
    send = !since.elements.empty();
    Json elements = Json::array();
    for (const auto& e : since.elements) elements.push_back(element_to_json(s.vs->store->schema(), e));
    payload["kind"] = "raw";
    payload["vs_name"] = s.sub.vs_name;
    payload["elements"] = std::move(elements);
  }
  if (send) {
    PushDelivery d{s.sub.id, ++s.last_seq, now, std::move(payload), 0};
    auto report = deliver(*delivery_, *s.sub.delivery_endpoint, d, config_.retry_backoff_ms, *clock_, s.sub.expiry,
                          [&](std::int64_t ms) {
                            if (clock_->is_manual()) return true;
                            return s.thread.running() ? s.thread.sleep_for_ms(ms) : (clock_->sleep_for_ms(ms), true);
                          });
    delivery_attempts_ += static_cast<std::uint64_t>(d.attempts);
    if (d.attempts > 1) s.retries += static_cast<std::uint64_t>(d.attempts - 1);
    if (d.attempts > 1) delivery_retries_ += static_cast<std::uint64_t>(d.attempts - 1);
    if (report.outcome == DeliveryOutcome::Dropped) {
      ++s.drops;
      ++delivery_drops_;
      log().warn("subscription {}: delivery {} dropped after {} attempt(s)", s.sub.id, d.sequence_no, d.attempts);
    } else {
      ++s.deliveries;
      ++messages_sent_;
      bytes_sent_ += report.bytes;
    }
    persist_subscription(s);
    // A push delivery is the subscriber's request-to-response path.
    l2_.record_us(std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - wall_start)
                      .count());
  }
  s.next_due = next_due_after(due, mono_ms(), s.interval_ms);
  if (clock_->now_ms() > s.sub.expiry) s.done = true;
}

void Node::send_cancellation(SubscriptionState& s, const std::string& reason) {
  std::lock_guard lock(s.mu);
  Json payload = Json::object();
  payload["kind"] = "cancelled";
  payload["vs_name"] = s.sub.vs_name;
  payload["reason"] = reason;
  PushDelivery d{s.sub.id, ++s.last_seq, clock_->now_ms(), std::move(payload), 0};
  auto report = deliver(*delivery_, *s.sub.delivery_endpoint, d, config_.retry_backoff_ms, *clock_,
                        std::numeric_limits<std::int64_t>::max(), [this](std::int64_t ms) {
                          clock_->sleep_for_ms(ms);
                          return true;
                        });
  delivery_attempts_ += static_cast<std::uint64_t>(d.attempts);
  if (report.outcome == DeliveryOutcome::Dropped) {
    ++delivery_drops_;
  } else {
    ++messages_sent_;
    bytes_sent_ += report.bytes;
  }
}

void Node::start_subscription_thread(const std::shared_ptr<SubscriptionState>& s) {
  s->thread.start([this, s] {
    while (!s->done && s->thread.sleep_until_mono_ms(s->next_due.load())) {
      if (clock_->now_ms() > s->sub.expiry) {
        s->done = true;
        break;
      }
      run_delivery(*s);
    }
    if (s->done && !s->thread.stopping()) {
      log().info("subscription {} expired after {} deliveries", s->sub.id, s->deliveries.load());
      forget_subscription(s->sub.id);
    }
  });
}

std::optional<fs::path> Node::subscription_dir() const {
  if (!config_.data_dir) return std::nullopt;
  return *config_.data_dir / "subscriptions";
}

void Node::persist_subscription(const SubscriptionState& s) const {
  auto dir = subscription_dir();
  if (!dir) return;
  try {
    fs::create_directories(*dir);
    Json j = Json::object();
    j["subscription"] = to_json(s.sub);
    j["last_seq"] = s.last_seq;
    write_file_atomically(*dir / (s.sub.id + ".json"), j.dump());
  } catch (const std::exception& e) {
    log().warn("cannot persist subscription {}: {}", s.sub.id, e.what());
  }
}

void Node::load_persisted_subscriptions() {
  auto dir = subscription_dir();
  if (!dir || !fs::is_directory(*dir)) return;
  const auto now = clock_->now_ms();
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(*dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      std::ifstream in(file);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto j = parse_json(text);
      auto sub = subscription_from_json(j.at("subscription"));
      auto vs = find_vs(sub.vs_name);
      if (sub.expiry <= now || !vs || !vs->active) {
        fs::remove(file);
        continue;
      }
      auto state = std::make_shared<SubscriptionState>();
      state->sub = sub;
      state->vs = vs;
      state->interval_ms = sub.payload == PayloadKind::Processed ? std::max(sub.interval_ms, vs->vsd.emit_interval_ms)
                                                                 : sub.interval_ms;
      state->next_due = mono_ms() + state->interval_ms;
      state->last_seq = j.value("last_seq", std::uint64_t{0});
      state->raw_cursor = vs->store->total_appended();
      std::unique_lock lock(mu_);
      if (subs_.count(sub.id)) continue;
      subs_[sub.id] = state;
      sub_order_.push_back(sub.id);
      // Keep ids unique across restarts.
      const auto suffix = sub.id.rfind("-s");
      if (suffix != std::string::npos) {
        try {
          next_sub_id_ = std::max<std::uint64_t>(next_sub_id_, std::stoull(sub.id.substr(suffix + 2)) + 1);
        } catch (const std::exception&) {
        }
      }
      log().info("restored subscription {} on {}", sub.id, sub.vs_name);
    } catch (const std::exception& e) {
      log().warn("{}: cannot restore subscription: {}", file.string(), e.what());
    }
  }
}

Json Node::metrics() const {
  std::uint64_t samples_ok = 0;
  std::uint64_t samples_dropped = 0;
  Json sensors = Json::object();
  Json subs = Json::object();
  {
    std::shared_lock lock(mu_);
    for (const auto& [name, vs] : sensors_) {
      const auto& st = vs->task->stats();
      samples_ok += st.samples_ok;
      samples_dropped += st.samples_dropped;
      Json j = Json::object();
      j["active"] = vs->active.load();
      j["plugin_state"] = to_string(vs->task->plugin_state());
      j["samples_ok"] = st.samples_ok.load();
      j["samples_dropped"] = st.samples_dropped.load();
      j["out_of_order"] = st.out_of_order.load();
      j["empty_reads"] = st.empty_reads.load();
      j["failures"] = st.failures.load();
      j["restarts"] = st.restarts.load();
      j["stored"] = vs->store->size();
      j["total_appended"] = vs->store->total_appended();
      j["l1_ms"] = to_json(st.l1.summary());
      sensors[name] = std::move(j);
    }
    for (const auto& id : sub_order_) {
      const auto& s = subs_.at(id);
      Json j = Json::object();
      j["vs_name"] = s->sub.vs_name;
      j["deliveries"] = s->deliveries.load();
      j["drops"] = s->drops.load();
      j["retries"] = s->retries.load();
      subs[id] = std::move(j);
    }
  }
  Json m = Json::object();
  m["node_id"] = config_.node_id;
  m["now"] = clock_->now_ms();
  m["samples_ok"] = samples_ok;
  m["samples_dropped"] = samples_dropped;
  m["messages_sent"] = messages_sent_.load();
  m["bytes_sent"] = bytes_sent_.load();
  m["delivery_attempts"] = delivery_attempts_.load();
  m["delivery_retries"] = delivery_retries_.load();
  m["delivery_drops"] = delivery_drops_.load();
  m["l1_ms"] = to_json(l1_->summary());
  m["l2_ms"] = to_json(l2_.summary());
  m["virtual_sensors"] = std::move(sensors);
  m["subscriptions"] = std::move(subs);
  m["energy"] = to_json(account(CounterSnapshot{samples_ok, messages_sent_.load(), bytes_sent_.load()},
                                config_.cost_model));
  return m;
}

bool Node::register_with_registry() {
  if (!config_.registry_url) return false;
  Json body = Json::object();
  body["node_id"] = config_.node_id;
  body["base_url"] = public_url();
  Json descriptors = Json::array();
  for (const auto& d : list_sensors()) descriptors.push_back(to_json(d));
  body["descriptors"] = std::move(descriptors);
  try {
    auto url = parse_url(*config_.registry_url);
    auto base = url.path == "/" ? std::string() : url.path;
    auto res = http_post(url, base + "/registry/sensors", body.dump());
    const bool ok = res && res->status >= 200 && res->status < 300;
    if (ok) ++registrations_;
    else log().warn("registration with {} failed", *config_.registry_url);
    return ok;
  } catch (const Error& e) {
    log().warn("registration failed: {}", e.what());
    return false;
  }
}

std::vector<std::string> Node::evict_unused_plugins() {
  if (!config_.plugin_budget_bytes) return {};
  return catalog_.evict_unused(*config_.plugin_budget_bytes, clock_->now_ms());
}

void Node::start() {
  if (clock_->is_manual()) throw ConfigError("a node on a manual clock is driven with advance_to()");
  if (running_.exchange(true)) return;
  load_persisted_subscriptions();
  std::vector<std::shared_ptr<VirtualSensor>> sensors;
  std::vector<std::shared_ptr<SubscriptionState>> subs;
  {
    std::shared_lock lock(mu_);
    for (const auto& [n, vs] : sensors_) sensors.push_back(vs);
    for (const auto& [id, s] : subs_) subs.push_back(s);
  }
  for (auto& vs : sensors) {
    if (vs->active) vs->task->start_thread();
  }
  for (auto& s : subs) start_subscription_thread(s);
  evict_unused_plugins();
  housekeeping_.start([this] {
    auto next_heartbeat = mono_ms();
    auto next_evict = mono_ms() + config_.eviction_period_ms;
    while (housekeeping_.sleep_until_mono_ms(std::min(next_heartbeat, next_evict))) {
      const auto now = mono_ms();
      if (now >= next_heartbeat) {
        register_with_registry();
        next_heartbeat = now + config_.heartbeat_ms;
      }
      if (now >= next_evict) {
        evict_unused_plugins();
        next_evict = now + config_.eviction_period_ms;
      }
    }
  });
}

void Node::stop() {
  housekeeping_.stop();
  std::vector<std::shared_ptr<VirtualSensor>> sensors;
  std::vector<std::shared_ptr<SubscriptionState>> subs;
  {
    std::shared_lock lock(mu_);
    for (const auto& [n, vs] : sensors_) sensors.push_back(vs);
    for (const auto& [id, s] : subs_) subs.push_back(s);
  }
  for (auto& s : subs) s->thread.stop();
  for (auto& vs : sensors) {
    if (running_) vs->task->stop();
  }
  running_ = false;
}

void Node::advance_to(std::int64_t t) {
  auto* manual = dynamic_cast<ManualClock*>(clock_.get());
  if (!manual) throw ConfigError("advance_to requires a manual clock");
  for (;;) {
    std::shared_ptr<VirtualSensor> next_vs;
    std::shared_ptr<SubscriptionState> next_sub;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    {
      std::shared_lock lock(mu_);
      for (const auto& [name, vs] : sensors_) {
        if (!vs->active || vs->task->dead()) continue;
        if (vs->task->next_due() < best) {
          best = vs->task->next_due();
          next_vs = vs;
        }
      }
      for (const auto& id : sub_order_) {
        const auto& s = subs_.at(id);
        if (s->done) continue;
        if (s->next_due < best) { // sampling wins ties
          best = s->next_due;
          next_vs.reset();
          next_sub = s;
        }
      }
    }
    if (best > t) break;
    if (best > manual->now_ms()) manual->set(best);
    if (next_vs) {
      next_vs->task->tick();
    } else if (next_sub) {
      if (manual->now_ms() > next_sub->sub.expiry) {
        next_sub->done = true;
      } else {
        run_delivery(*next_sub);
      }
      if (next_sub->done) forget_subscription(next_sub->sub.id);
    }
  }
  if (t > manual->now_ms()) manual->set(t);
}

void Node::set_public_url(std::string url) {
  std::unique_lock lock(mu_);
  public_url_ = std::move(url);
}

std::string Node::public_url() const {
  std::shared_lock lock(mu_);
  return public_url_;
}

} // namespace mosden
