#pragma once

// Desk-scale cloud companion: sensor descriptor registry, request matching,
// subscription dispatch to nodes and the delivery sink.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mosden/clock.hpp"
#include "mosden/model.hpp"
#include "mosden/net.hpp"
#include "mosden/node.hpp"

namespace mosden {

struct RegistryRecord {
  SensorDescriptor descriptor;
  std::string node_base_url;
  std::int64_t last_seen = 0;
};

Json to_json(const RegistryRecord& r);
RegistryRecord registry_record_from_json(const Json& j);

struct UserRequest {
  std::string id; ///< assigned by the registry when empty
  /// key=value conjunction over descriptor metadata; the keys "node_id" and
  /// "vs_name" match the descriptor's own fields.
  std::map<std::string, std::string> criteria;
  std::optional<WindowSpec> window;
  std::vector<Aggregation> aggregations;
  std::int64_t interval_ms = 60'000;
  std::int64_t duration_ms = 0;
  PayloadKind payload = PayloadKind::Processed;

  void validate() const;
};

Json to_json(const UserRequest& r);
UserRequest user_request_from_json(const Json& j);

bool matches(const std::map<std::string, std::string>& criteria, const SensorDescriptor& d);

struct DispatchFailure {
  std::string node_id;
  std::string vs_name;
  std::string error;
};

struct DispatchResult {
  std::string request_id;
  std::vector<std::string> subscription_ids;
  std::vector<DispatchFailure> failures;
};

Json to_json(const DispatchResult& r);

enum class IngestOutcome { Stored, Duplicate, Quarantined };

std::string_view to_string(IngestOutcome o);

class Registry {
public:
  explicit Registry(std::optional<std::filesystem::path> data_dir = std::nullopt,
                    std::shared_ptr<Clock> clock = system_clock(), std::int64_t liveness_ms = 30'000);

  /// Upserts by (node_id, vs_name) and refreshes last_seen for all of the
  /// node's records. Throws SchemaError/InvariantError on a bad descriptor.
  void register_sensors(const std::string& node_id, const std::string& base_url,
                        const std::vector<SensorDescriptor>& descriptors);
  /// All records, ordered by node then virtual sensor.
  std::vector<RegistryRecord> records() const;
  /// Live records satisfying every criterion.
  std::vector<RegistryRecord> match(const UserRequest& r) const;
  /// One push subscription per match, delivering to `ingest_url`. Throws NoMatch.
  DispatchResult dispatch(UserRequest r, const std::string& ingest_url);
  IngestOutcome ingest(const PushDelivery& d);

  /// Accepted deliveries of a request in arrival order. Throws UnknownRequest.
  std::vector<Json> results(const std::string& request_id) const;
  std::optional<std::string> request_for(const std::string& subscription_id) const;
  std::uint64_t quarantined() const;
  std::uint64_t duplicates() const;
  std::int64_t liveness_ms() const { return liveness_ms_; }

private:
  struct RequestState {
    UserRequest request;
    std::vector<std::string> subscriptions;
    std::vector<Json> results;
    std::set<std::pair<std::string, std::uint64_t>> seen;
  };

  void snapshot() const;
  void load();
  void append_line(const std::filesystem::path& file, const std::string& line) const;

  std::optional<std::filesystem::path> data_dir_;
  std::shared_ptr<Clock> clock_;
  std::int64_t liveness_ms_;

  mutable std::shared_mutex mu_;
  std::map<std::pair<std::string, std::string>, RegistryRecord> records_;
  std::map<std::string, RequestState> requests_;
  std::map<std::string, std::string> sub_to_request_;
  std::uint64_t next_request_ = 1;
  std::uint64_t quarantined_ = 0;
  std::uint64_t duplicates_ = 0;
  mutable std::mutex log_mu_;
};

/// HTTP front end:
///   POST /registry/sensors, GET /registry/sensors,
///   POST /registry/requests, GET /registry/requests/{id}/results,
///   POST /registry/ingest, GET /healthz
class RegistryServer {
public:
  explicit RegistryServer(Registry& registry);
  ~RegistryServer();

  int start(const std::string& host, int port);
  void stop();
  int port() const { return http_.port(); }
  std::string base_url() const;
  std::string ingest_url() const { return base_url() + "/registry/ingest"; }

private:
  Registry& registry_;
  HttpServer http_;
  std::string host_;
};

} // namespace mosden
