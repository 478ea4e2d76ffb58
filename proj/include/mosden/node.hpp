#pragma once

// A middleware node: virtual sensors (plugin -> wrapper -> store), the pull
// and push query paths, peer streaming, metrics and persistence.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mosden/clock.hpp"
#include "mosden/histogram.hpp"
#include "mosden/model.hpp"
#include "mosden/offload.hpp"
#include "mosden/plugin.hpp"
#include "mosden/stream.hpp"
#include "mosden/worker.hpp"
#include "mosden/wrapper.hpp"

namespace mosden {

inline constexpr std::string_view kPeerPluginId = "mosden.peer";

struct NodeConfig {
  std::string node_id = "node";
  std::string listen_host = "127.0.0.1";
  int listen_port = 0; ///< 0 picks a free port
  std::optional<std::filesystem::path> plugin_dir;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> vsd_dir;
  CostParameters cost_model;
  std::optional<std::string> registry_url;
  /// Base URL advertised to the registry; defaults to the bound address.
  std::optional<std::string> public_url;
  std::optional<std::int64_t> plugin_budget_bytes;
  HostOptions host;
  std::int64_t heartbeat_ms = 10'000;
  std::int64_t eviction_period_ms = 60'000;
  std::vector<std::int64_t> retry_backoff_ms = {250, 500, 1000};
};

/// Relative paths resolve against `base_dir`. Throws ConfigError.
NodeConfig node_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
NodeConfig load_node_config(const std::filesystem::path& path);

// --- push delivery --------------------------------------------------------

/// Outbound transport for push deliveries; true means the endpoint accepted.
class DeliveryClient {
public:
  virtual ~DeliveryClient() = default;
  virtual bool post(const std::string& endpoint, const std::string& body) = 0;
};

class HttpDeliveryClient final : public DeliveryClient {
public:
  bool post(const std::string& endpoint, const std::string& body) override;
};

/// Wire form: {"subscription_id","sequence_no","sent_at","payload"}.
struct PushDelivery {
  std::string subscription_id;
  std::uint64_t sequence_no = 0;
  std::int64_t sent_at = 0;
  Json payload;
  int attempts = 0;
};

Json to_json(const PushDelivery& d);
PushDelivery delivery_from_json(const Json& j);

enum class DeliveryOutcome { Ok, Retried, Dropped };

std::string_view to_string(DeliveryOutcome o);

struct DeliveryReport {
  DeliveryOutcome outcome = DeliveryOutcome::Dropped;
  std::size_t bytes = 0; ///< size of the accepted body
};

/// POSTs `d` to `endpoint`, retrying after each entry of `backoff_ms`. The
/// first attempt goes out as stamped by the caller, who has already checked
/// it against `expiry`; retries are restamped and stop once the clock passes
/// `expiry`. `sleep` returns false to abandon the retries (e.g. on shutdown).
DeliveryReport deliver(DeliveryClient& client, const std::string& endpoint, PushDelivery& d,
                       const std::vector<std::int64_t>& backoff_ms, const Clock& clock, std::int64_t expiry,
                       const std::function<bool(std::int64_t)>& sleep);

// --- node -----------------------------------------------------------------

struct PullRequest {
  enum class Mode { Latest, Raw, Processed } mode = Mode::Latest;
  std::optional<WindowSpec> window;
  std::optional<std::uint64_t> since_seq;
};

PullRequest::Mode pull_mode_from_string(std::string_view s);

class Node {
public:
  explicit Node(NodeConfig config, std::shared_ptr<Clock> clock = system_clock(),
                std::shared_ptr<DeliveryClient> delivery = std::make_shared<HttpDeliveryClient>());
  ~Node();

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // -- virtual sensors
  /// Configures the plugin, fetches its schema, checks aggregation fields and
  /// starts sampling (immediately when the node is running).
  void activate(const VirtualSensorDefinition& vsd);
  /// Stops sampling, keeps the history, cancels subscriptions with a notice.
  void deactivate(const std::string& vs_name);
  /// Activates every *.json VSD in `dir`; failures are logged and returned.
  std::vector<std::pair<std::string, std::string>> activate_dir(const std::filesystem::path& dir);
  /// Creates `local_alias` whose plugin streams `remote_vs` from another node.
  void peer_stream(const std::string& remote_url, const std::string& remote_vs, VirtualSensorDefinition local);

  // -- api
  std::vector<SensorDescriptor> list_sensors() const;
  Json pull_data(const std::string& vs_name, const PullRequest& request) const;
  Subscription create_subscription(Subscription request);
  std::vector<Subscription> subscriptions() const;
  void cancel_subscription(const std::string& id);
  Json metrics() const;
  void record_l2_us(std::int64_t micros) { l2_.record_us(micros); }

  /// One registration round with the configured registry. Returns success.
  bool register_with_registry();
  std::vector<std::string> evict_unused_plugins();

  // -- lifecycle
  /// Starts sampling and delivery threads plus housekeeping. Not used with a
  /// manual clock; drive those nodes with advance_to().
  void start();
  void stop();
  bool running() const { return running_.load(); }
  /// Manual clock only: runs every sampling tick and delivery due up to `t`
  /// in time order, then leaves the clock at `t`.
  void advance_to(std::int64_t t);

  void set_public_url(std::string url);
  std::string public_url() const;
  const NodeConfig& config() const { return config_; }
  PluginCatalog& catalog() { return catalog_; }
  const std::shared_ptr<Clock>& clock() const { return clock_; }
  std::shared_ptr<StreamStore> store(const std::string& vs_name) const;
  const SamplingTask* task(const std::string& vs_name) const;

private:
  struct VirtualSensor;
  struct SubscriptionState;

  std::shared_ptr<VirtualSensor> find_vs(const std::string& name) const;
  void run_delivery(SubscriptionState& s);
  void send_cancellation(SubscriptionState& s, const std::string& reason);
  void start_subscription_thread(const std::shared_ptr<SubscriptionState>& s);
  void persist_subscription(const SubscriptionState& s) const;
  void forget_subscription(const std::string& id);
  void load_persisted_subscriptions();
  std::optional<std::filesystem::path> subscription_dir() const;
  std::int64_t mono_ms() const { return clock_->mono_us() / 1000; }

  NodeConfig config_;
  std::shared_ptr<Clock> clock_;
  std::shared_ptr<DeliveryClient> delivery_;
  PluginCatalog catalog_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<VirtualSensor>> sensors_;
  std::map<std::string, std::shared_ptr<SubscriptionState>> subs_;
  std::vector<std::string> sub_order_;
  std::uint64_t next_sub_id_ = 1;
  std::string public_url_;

  std::shared_ptr<LatencyHistogram> l1_ = std::make_shared<LatencyHistogram>();
  LatencyHistogram l2_;
  std::atomic<std::uint64_t> messages_sent_{0};
  std::atomic<std::uint64_t> bytes_sent_{0};
  std::atomic<std::uint64_t> delivery_attempts_{0};
  std::atomic<std::uint64_t> delivery_drops_{0};
  std::atomic<std::uint64_t> delivery_retries_{0};
  std::atomic<std::uint64_t> l2_requests_{0};
  std::atomic<std::uint64_t> registrations_{0};

  std::atomic<bool> running_{false};
  StoppableThread housekeeping_;
};

} // namespace mosden
