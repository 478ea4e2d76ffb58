#pragma once

// Shared data types of the middleware, their validation, and their
// canonical JSON forms. Nothing in here performs I/O.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace mosden {

/// Insertion-ordered JSON; canonical output depends on key order.
using Json = nlohmann::ordered_json;
using ConfigMap = std::map<std::string, std::string>;

enum class ValueType { Double, Integer, String };

using Value = std::variant<double, std::int64_t, std::string>;

std::string_view to_string(ValueType t);
ValueType value_type_from_string(std::string_view s);
ValueType value_type_of(const Value& v);
bool is_numeric(ValueType t);

/// `[a-z][a-z0-9_]*`
bool is_identifier(std::string_view s);

/// One column of a stream schema.
class DataField {
public:
  DataField(std::string name, ValueType type, std::optional<std::string> unit = {});

  const std::string& name() const { return name_; }
  ValueType value_type() const { return type_; }
  const std::optional<std::string>& unit() const { return unit_; }

  bool operator==(const DataField&) const = default;

private:
  std::string name_;
  ValueType type_;
  std::optional<std::string> unit_;
};

using Schema = std::vector<DataField>;

/// Throws InvariantError on duplicate field names.
void check_schema(const Schema& schema);
std::optional<std::size_t> field_index(const Schema& schema, std::string_view name);

/// One timestamped reading row; values are positional against a Schema.
struct StreamElement {
  std::int64_t timestamp = 0;
  std::vector<Value> values;

  bool operator==(const StreamElement&) const = default;
};

enum class Transport { InProcess, Subprocess };

std::string_view to_string(Transport t);

struct PluginBinding {
  std::string plugin_id;
  Transport transport = Transport::InProcess;
  std::vector<std::string> command; ///< required iff transport is Subprocess
  ConfigMap config;

  void validate() const;
  bool operator==(const PluginBinding&) const = default;
};

enum class WindowKind { Count, Time };

struct WindowSpec {
  WindowKind kind = WindowKind::Count;
  std::int64_t size = 1; ///< rows for Count, milliseconds for Time

  void validate() const;
  bool operator==(const WindowSpec&) const = default;
};

/// Parses the compact query form `count:60` / `time:5000`.
WindowSpec parse_window_param(std::string_view text);
std::string to_param(const WindowSpec& w);

enum class AggFn { Avg, Min, Max, Sum, Count, Last };

std::string_view to_string(AggFn fn);
AggFn agg_fn_from_string(std::string_view s);
bool requires_numeric(AggFn fn);

struct Aggregation {
  std::string field;
  AggFn fn = AggFn::Avg;

  /// Key under which the result is reported, e.g. `temp.avg`.
  std::string key() const;
  void validate() const;
  bool operator==(const Aggregation&) const = default;
};

/// Throws FieldNotInSchema / TypeMismatch when an aggregation does not fit.
void check_aggregations(const Schema& schema, const std::vector<Aggregation>& aggs);

inline constexpr std::int64_t kDefaultSamplingIntervalMs = 1000;

struct VirtualSensorDefinition {
  std::string name;
  PluginBinding binding;
  std::int64_t sampling_interval_ms = kDefaultSamplingIntervalMs;
  WindowSpec window;
  std::vector<Aggregation> aggregations;
  std::int64_t emit_interval_ms = kDefaultSamplingIntervalMs;
  std::int64_t history_size = 1;
  std::optional<std::string> description;

  void validate() const;
  bool operator==(const VirtualSensorDefinition&) const = default;
};

struct SensorDescriptor {
  std::string node_id;
  std::string vs_name;
  Schema schema;
  ConfigMap metadata;
  std::int64_t registered_at = 0;

  void validate() const;
  bool operator==(const SensorDescriptor&) const = default;
};

enum class SubscriptionMode { Push, Pull };
enum class PayloadKind { Processed, Raw };

struct Subscription {
  std::string id;
  std::string vs_name;
  SubscriptionMode mode = SubscriptionMode::Push;
  std::optional<std::string> delivery_endpoint;
  std::int64_t interval_ms = 1000;
  std::int64_t expiry = 0;
  std::int64_t created_at = 0;
  PayloadKind payload = PayloadKind::Processed;
  /// Query overrides; empty means "use the VSD's window/aggregations".
  std::optional<WindowSpec> window;
  std::vector<Aggregation> aggregations;
  std::optional<std::string> idempotency_key;

  void validate() const;
  bool operator==(const Subscription&) const = default;
};

struct CostParameters {
  double c_proc_per_sample = 0.0;
  double c_radio_wake = 0.0;
  double c_per_byte = 0.0;

  void validate() const;
  bool operator==(const CostParameters&) const = default;
};

// --- validation -----------------------------------------------------------

enum class ViolationKind { TypeMismatch, ArityMismatch };

struct Violation {
  ViolationKind kind;
  std::size_t field_index = 0; ///< meaningful for TypeMismatch
  std::string detail;
};

/// Total function: empty result iff `e` satisfies `schema`.
std::vector<Violation> validate_element_against_schema(const Schema& schema,
                                                       const StreamElement& e);

// --- JSON forms -----------------------------------------------------------

Json to_json(const Value& v);
Value value_from_json(const Json& j, ValueType expected, const std::string& pointer);

Json to_json(const DataField& f);
DataField data_field_from_json(const Json& j, const std::string& pointer = "");
Json to_json(const Schema& s);
Schema schema_from_json(const Json& j, const std::string& pointer = "");

Json to_json(const WindowSpec& w);
WindowSpec window_from_json(const Json& j, const std::string& pointer = "");
Json to_json(const Aggregation& a);
Aggregation aggregation_from_json(const Json& j, const std::string& pointer = "");
Json to_json(const std::vector<Aggregation>& aggs);
std::vector<Aggregation> aggregations_from_json(const Json& j, const std::string& pointer = "");

Json to_json(const PluginBinding& b);
PluginBinding binding_from_json(const Json& j, const std::string& pointer = "");

Json to_json(const VirtualSensorDefinition& vsd);
VirtualSensorDefinition vsd_from_json(const Json& j);
VirtualSensorDefinition parse_vsd(std::string_view document);
std::string serialize_vsd(const VirtualSensorDefinition& vsd);

/// Canonical element form: `{"timestamp":..,"values":{..}}` with values in
/// schema order. Throws TypeMismatch if `e` does not satisfy `schema`.
Json element_to_json(const Schema& schema, const StreamElement& e);
std::string serialize_stream_element(const Schema& schema, const StreamElement& e);
StreamElement element_from_json(const Schema& schema, const Json& j);
StreamElement parse_stream_element(const Schema& schema, std::string_view text);

Json to_json(const SensorDescriptor& d);
SensorDescriptor descriptor_from_json(const Json& j, const std::string& pointer = "");

std::string_view to_string(SubscriptionMode m);
std::string_view to_string(PayloadKind p);
Json to_json(const Subscription& s);
/// Parses a subscription document; `id`/`created_at` are optional here.
Subscription subscription_from_json(const Json& j);

Json to_json(const CostParameters& c);
CostParameters cost_parameters_from_json(const Json& j, const std::string& pointer = "");

/// Parse helper shared by every JSON reader; wraps parse errors in SchemaError.
Json parse_json(std::string_view text);

} // namespace mosden
