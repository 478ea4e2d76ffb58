#include "mosden/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mosden/errors.hpp"

namespace mosden {

namespace {

std::string child(const std::string& pointer, std::string_view key) {
  return pointer + "/" + std::string(key);
}

std::string child(const std::string& pointer, std::size_t index) {
  return pointer + "/" + std::to_string(index);
}

/// Strict object reader: tracks consumed keys so unknown keys can be rejected.
class ObjectReader {
public:
  ObjectReader(const Json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) {
      throw SchemaError(pointer_.empty() ? "/" : pointer_, "expected an object");
    }
  }

  bool has(std::string_view key) const { return j_.contains(std::string(key)); }

  const Json& required(std::string_view key) {
    auto it = j_.find(std::string(key));
    if (it == j_.end()) {
      throw SchemaError(child(pointer_, key), "missing required key");
    }
    seen_.insert(std::string(key));
    return *it;
  }

  const Json* optional(std::string_view key) {
    auto it = j_.find(std::string(key));
    if (it == j_.end() || it->is_null()) {
      if (it != j_.end()) seen_.insert(std::string(key));
      return nullptr;
    }
    seen_.insert(std::string(key));
    return &*it;
  }

  std::string string(std::string_view key) { return as_string(required(key), child(pointer_, key)); }

  std::int64_t integer(std::string_view key) { return as_integer(required(key), child(pointer_, key)); }

  std::optional<std::int64_t> opt_integer(std::string_view key) {
    if (const Json* v = optional(key)) return as_integer(*v, child(pointer_, key));
    return std::nullopt;
  }

  std::optional<std::string> opt_string(std::string_view key) {
    if (const Json* v = optional(key)) return as_string(*v, child(pointer_, key));
    return std::nullopt;
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw SchemaError(child(pointer_, it.key()), "unexpected key");
      }
    }
  }

  const std::string& pointer() const { return pointer_; }

  static std::string as_string(const Json& v, const std::string& pointer) {
    if (!v.is_string()) throw SchemaError(pointer, "expected a string");
    return v.get<std::string>();
  }

  static std::int64_t as_integer(const Json& v, const std::string& pointer) {
    if (!v.is_number_integer()) throw SchemaError(pointer, "expected an integer");
    if (v.is_number_unsigned() &&
        v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      throw SchemaError(pointer, "integer out of range");
    }
    return v.get<std::int64_t>();
  }

  static double as_number(const Json& v, const std::string& pointer) {
    if (!v.is_number()) throw SchemaError(pointer, "expected a number");
    return v.get<double>();
  }

private:
  const Json& j_;
  std::string pointer_;
  std::set<std::string> seen_;
};

ConfigMap string_map_from_json(const Json& j, const std::string& pointer) {
  if (!j.is_object()) throw SchemaError(pointer, "expected an object of strings");
  ConfigMap out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[it.key()] = ObjectReader::as_string(it.value(), child(pointer, it.key()));
  }
  return out;
}

Json string_map_to_json(const ConfigMap& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

} // namespace

// --- enums ----------------------------------------------------------------

std::string_view to_string(ValueType t) {
  switch (t) {
  case ValueType::Double: return "double";
  case ValueType::Integer: return "integer";
  case ValueType::String: return "string";
  }
  return "?";
}

ValueType value_type_from_string(std::string_view s) {
  if (s == "double") return ValueType::Double;
  if (s == "integer") return ValueType::Integer;
  if (s == "string") return ValueType::String;
  throw SchemaError("", "unknown value_type '" + std::string(s) + "'");
}

ValueType value_type_of(const Value& v) {
  switch (v.index()) {
  case 0: return ValueType::Double;
  case 1: return ValueType::Integer;
  default: return ValueType::String;
  }
}

bool is_numeric(ValueType t) { return t != ValueType::String; }

bool is_identifier(std::string_view s) {
  if (s.empty() || s.front() < 'a' || s.front() > 'z') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::string_view to_string(Transport t) {
  return t == Transport::InProcess ? "in_process" : "subprocess";
}

std::string_view to_string(AggFn fn) {
  switch (fn) {
  case AggFn::Avg: return "avg";
  case AggFn::Min: return "min";
  case AggFn::Max: return "max";
  case AggFn::Sum: return "sum";
  case AggFn::Count: return "count";
  case AggFn::Last: return "last";
  }
  return "?";
}

AggFn agg_fn_from_string(std::string_view s) {
  for (AggFn fn : {AggFn::Avg, AggFn::Min, AggFn::Max, AggFn::Sum, AggFn::Count, AggFn::Last}) {
    if (to_string(fn) == s) return fn;
  }
  throw SchemaError("", "unknown aggregation fn '" + std::string(s) + "'");
}

bool requires_numeric(AggFn fn) {
  return fn == AggFn::Avg || fn == AggFn::Min || fn == AggFn::Max || fn == AggFn::Sum;
}

std::string_view to_string(SubscriptionMode m) { return m == SubscriptionMode::Push ? "push" : "pull"; }

std::string_view to_string(PayloadKind p) { return p == PayloadKind::Processed ? "processed" : "raw"; }

// --- types ----------------------------------------------------------------

DataField::DataField(std::string name, ValueType type, std::optional<std::string> unit)
    : name_(std::move(name)), type_(type), unit_(std::move(unit)) {
  if (!is_identifier(name_)) {
    throw InvariantError("", "field name '" + name_ + "' is not an identifier");
  }
}

void check_schema(const Schema& schema) {
  if (schema.empty()) throw InvariantError("", "a schema needs at least one field");
  std::set<std::string> names;
  for (const auto& f : schema) {
    if (!names.insert(f.name()).second) {
      throw InvariantError("", "duplicate field name '" + f.name() + "'");
    }
  }
}

std::optional<std::size_t> field_index(const Schema& schema, std::string_view name) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name() == name) return i;
  }
  return std::nullopt;
}

void PluginBinding::validate() const {
  if (plugin_id.empty()) throw InvariantError("/binding/plugin_id", "must be non-empty");
  const bool needs_command = transport == Transport::Subprocess;
  if (needs_command && command.empty()) {
    throw InvariantError("/binding/command", "required for subprocess transport");
  }
  if (!needs_command && !command.empty()) {
    throw InvariantError("/binding/command", "only allowed for subprocess transport");
  }
}

void WindowSpec::validate() const {
  if (size < 1) throw InvariantError("/window/size", "must be >= 1");
}

WindowSpec parse_window_param(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) throw BadRequest("window must look like count:N or time:MS");
  auto kind = text.substr(0, colon);
  auto size_text = std::string(text.substr(colon + 1));
  WindowSpec w;
  if (kind == "count") {
    w.kind = WindowKind::Count;
  } else if (kind == "time") {
    w.kind = WindowKind::Time;
  } else {
    throw BadRequest("unknown window kind '" + std::string(kind) + "'");
  }
  if (size_text.empty() || !std::all_of(size_text.begin(), size_text.end(), ::isdigit) ||
      size_text.size() > 18) {
    throw BadRequest("window size must be a positive integer");
  }
  w.size = std::stoll(size_text);
  if (w.size < 1) throw BadRequest("window size must be >= 1");
  return w;
}

std::string to_param(const WindowSpec& w) {
  return std::string(w.kind == WindowKind::Count ? "count:" : "time:") + std::to_string(w.size);
}

std::string Aggregation::key() const { return field + "." + std::string(to_string(fn)); }

void Aggregation::validate() const {
  if (!is_identifier(field)) throw InvariantError("", "aggregation field '" + field + "' is not an identifier");
}

void check_aggregations(const Schema& schema, const std::vector<Aggregation>& aggs) {
  for (const auto& a : aggs) {
    auto idx = field_index(schema, a.field);
    if (!idx) throw FieldNotInSchema(a.field);
    if (requires_numeric(a.fn) && !is_numeric(schema[*idx].value_type())) {
      throw TypeMismatch(std::string(to_string(a.fn)) + " requires a numeric field, '" + a.field +
                         "' is " + std::string(to_string(schema[*idx].value_type())));
    }
  }
}

void VirtualSensorDefinition::validate() const {
  if (!is_identifier(name)) throw InvariantError("/name", "'" + name + "' is not an identifier");
  binding.validate();
  if (sampling_interval_ms < 1) throw InvariantError("/sampling_interval_ms", "must be >= 1");
  window.validate();
  if (aggregations.empty()) throw InvariantError("/aggregations", "must be non-empty");
  for (std::size_t i = 0; i < aggregations.size(); ++i) {
    try {
      aggregations[i].validate();
    } catch (const InvariantError& e) {
      throw InvariantError(child("/aggregations", i), e.what());
    }
  }
  if (emit_interval_ms < 1) throw InvariantError("/emit_interval_ms", "must be >= 1");
  if (emit_interval_ms < sampling_interval_ms) {
    throw InvariantError("/emit_interval_ms", "must be >= sampling_interval_ms (" +
                                                  std::to_string(sampling_interval_ms) + ")");
  }
  if (history_size < 1) throw InvariantError("/history_size", "must be >= 1");
}

void SensorDescriptor::validate() const {
  if (node_id.empty()) throw InvariantError("/node_id", "must be non-empty");
  if (!is_identifier(vs_name)) throw InvariantError("/vs_name", "'" + vs_name + "' is not an identifier");
  check_schema(schema);
}

void Subscription::validate() const {
  if (!is_identifier(vs_name)) throw InvariantError("/vs_name", "'" + vs_name + "' is not an identifier");
  if (mode == SubscriptionMode::Push && (!delivery_endpoint || delivery_endpoint->empty())) {
    throw InvariantError("/delivery_endpoint", "required for push mode");
  }
  if (interval_ms < 1) throw InvariantError("/interval_ms", "must be >= 1");
  if (window) window->validate();
  for (const auto& a : aggregations) a.validate();
}

void CostParameters::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NegativeInput(std::string(name) + " must be a finite value >= 0");
  };
  check(c_proc_per_sample, "c_proc_per_sample");
  check(c_radio_wake, "c_radio_wake");
  check(c_per_byte, "c_per_byte");
}

// --- element validation ---------------------------------------------------

std::vector<Violation> validate_element_against_schema(const Schema& schema, const StreamElement& e) {
  std::vector<Violation> out;
  if (e.values.size() != schema.size()) {
    out.push_back({ViolationKind::ArityMismatch, 0,
                   "expected " + std::to_string(schema.size()) + " values, got " +
                       std::to_string(e.values.size())});
  }
  const std::size_t n = std::min(e.values.size(), schema.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto expected = schema[i].value_type();
    const auto actual = value_type_of(e.values[i]);
    if (expected != actual) {
      out.push_back({ViolationKind::TypeMismatch, i,
                     "field '" + schema[i].name() + "' expects " + std::string(to_string(expected)) +
                         ", got " + std::string(to_string(actual))});
    } else if (actual == ValueType::Double && !std::isfinite(std::get<double>(e.values[i]))) {
      out.push_back({ViolationKind::TypeMismatch, i, "field '" + schema[i].name() + "' is not finite"});
    }
  }
  return out;
}

// --- JSON -----------------------------------------------------------------

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
}

Json to_json(const Value& v) {
  return std::visit([](const auto& x) { return Json(x); }, v);
}

Value value_from_json(const Json& j, ValueType expected, const std::string& pointer) {
  switch (expected) {
  case ValueType::Double:
    if (j.is_number()) return j.get<double>();
    break;
  case ValueType::Integer:
    if (j.is_number_integer()) return ObjectReader::as_integer(j, pointer);
    break;
  case ValueType::String:
    if (j.is_string()) return j.get<std::string>();
    break;
  }
  throw TypeMismatch(pointer + ": expected " + std::string(to_string(expected)));
}

Json to_json(const DataField& f) {
  Json j = Json::object();
  j["name"] = f.name();
  j["value_type"] = to_string(f.value_type());
  if (f.unit()) j["unit"] = *f.unit();
  return j;
}

DataField data_field_from_json(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  auto name = r.string("name");
  auto type_text = r.string("value_type");
  auto unit = r.opt_string("unit");
  r.reject_unknown();
  ValueType type;
  try {
    type = value_type_from_string(type_text);
  } catch (const SchemaError& e) {
    throw SchemaError(child(pointer, "value_type"), e.what());
  }
  try {
    return DataField(std::move(name), type, std::move(unit));
  } catch (const InvariantError& e) {
    throw InvariantError(child(pointer, "name"), e.what());
  }
}

Json to_json(const Schema& s) {
  Json j = Json::array();
  for (const auto& f : s) j.push_back(to_json(f));
  return j;
}

Schema schema_from_json(const Json& j, const std::string& pointer) {
  if (!j.is_array()) throw SchemaError(pointer, "expected an array of fields");
  Schema s;
  for (std::size_t i = 0; i < j.size(); ++i) s.push_back(data_field_from_json(j[i], child(pointer, i)));
  try {
    check_schema(s);
  } catch (const InvariantError& e) {
    throw InvariantError(pointer, e.what());
  }
  return s;
}

Json to_json(const WindowSpec& w) {
  Json j = Json::object();
  j["kind"] = w.kind == WindowKind::Count ? "count" : "time";
  j["size"] = w.size;
  return j;
}

WindowSpec window_from_json(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  auto kind = r.string("kind");
  WindowSpec w;
  if (kind == "count") {
    w.kind = WindowKind::Count;
  } else if (kind == "time") {
    w.kind = WindowKind::Time;
  } else {
    throw SchemaError(child(pointer, "kind"), "expected \"count\" or \"time\"");
  }
  w.size = r.integer("size");
  r.reject_unknown();
  if (w.size < 1) throw InvariantError(child(pointer, "size"), "must be >= 1");
  return w;
}

Json to_json(const Aggregation& a) {
  Json j = Json::object();
  j["field"] = a.field;
  j["fn"] = to_string(a.fn);
  return j;
}

Aggregation aggregation_from_json(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  Aggregation a;
  a.field = r.string("field");
  auto fn = r.string("fn");
  r.reject_unknown();
  try {
    a.fn = agg_fn_from_string(fn);
  } catch (const SchemaError& e) {
    throw SchemaError(child(pointer, "fn"), e.what());
  }
  if (!is_identifier(a.field)) throw InvariantError(child(pointer, "field"), "not an identifier");
  return a;
}

Json to_json(const std::vector<Aggregation>& aggs) {
  Json j = Json::array();
  for (const auto& a : aggs) j.push_back(to_json(a));
  return j;
}

std::vector<Aggregation> aggregations_from_json(const Json& j, const std::string& pointer) {
  if (!j.is_array()) throw SchemaError(pointer, "expected an array");
  std::vector<Aggregation> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(aggregation_from_json(j[i], child(pointer, i)));
  return out;
}

Json to_json(const PluginBinding& b) {
  Json j = Json::object();
  j["plugin_id"] = b.plugin_id;
  j["transport"] = to_string(b.transport);
  if (!b.command.empty()) j["command"] = b.command;
  j["config"] = string_map_to_json(b.config);
  return j;
}

PluginBinding binding_from_json(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  PluginBinding b;
  b.plugin_id = r.string("plugin_id");
  auto transport = r.string("transport");
  if (transport == "in_process") {
    b.transport = Transport::InProcess;
  } else if (transport == "subprocess") {
    b.transport = Transport::Subprocess;
  } else {
    throw SchemaError(child(pointer, "transport"), "expected \"in_process\" or \"subprocess\"");
  }
  if (const Json* cmd = r.optional("command")) {
    if (!cmd->is_array()) throw SchemaError(child(pointer, "command"), "expected an array of strings");
    for (std::size_t i = 0; i < cmd->size(); ++i) {
      b.command.push_back(ObjectReader::as_string((*cmd)[i], child(child(pointer, "command"), i)));
    }
  }
  if (const Json* cfg = r.optional("config")) b.config = string_map_from_json(*cfg, child(pointer, "config"));
  r.reject_unknown();
  if (b.plugin_id.empty()) throw InvariantError(child(pointer, "plugin_id"), "must be non-empty");
  if ((b.transport == Transport::Subprocess) == b.command.empty()) {
    throw InvariantError(child(pointer, "command"), "required for subprocess transport and only allowed there");
  }
  return b;
}

Json to_json(const VirtualSensorDefinition& vsd) {
  Json j = Json::object();
  j["name"] = vsd.name;
  j["binding"] = to_json(vsd.binding);
  j["sampling_interval_ms"] = vsd.sampling_interval_ms;
  j["window"] = to_json(vsd.window);
  j["aggregations"] = to_json(vsd.aggregations);
  j["emit_interval_ms"] = vsd.emit_interval_ms;
  j["history_size"] = vsd.history_size;
  if (vsd.description) j["description"] = *vsd.description;
  return j;
}

VirtualSensorDefinition vsd_from_json(const Json& j) {
  ObjectReader r(j, "");
  VirtualSensorDefinition vsd;
  vsd.name = r.string("name");
  vsd.binding = binding_from_json(r.required("binding"), "/binding");
  vsd.sampling_interval_ms = r.opt_integer("sampling_interval_ms").value_or(kDefaultSamplingIntervalMs);
  vsd.window = window_from_json(r.required("window"), "/window");
  vsd.aggregations = aggregations_from_json(r.required("aggregations"), "/aggregations");
  vsd.emit_interval_ms = r.integer("emit_interval_ms");
  vsd.history_size = r.integer("history_size");
  vsd.description = r.opt_string("description");
  r.reject_unknown();
  vsd.validate();
  return vsd;
}

VirtualSensorDefinition parse_vsd(std::string_view document) { return vsd_from_json(parse_json(document)); }

std::string serialize_vsd(const VirtualSensorDefinition& vsd) { return to_json(vsd).dump(); }

Json element_to_json(const Schema& schema, const StreamElement& e) {
  auto violations = validate_element_against_schema(schema, e);
  if (!violations.empty()) throw TypeMismatch(violations.front().detail);
  Json values = Json::object();
  for (std::size_t i = 0; i < schema.size(); ++i) values[schema[i].name()] = to_json(e.values[i]);
  Json j = Json::object();
  j["timestamp"] = e.timestamp;
  j["values"] = std::move(values);
  return j;
}

std::string serialize_stream_element(const Schema& schema, const StreamElement& e) {
  return element_to_json(schema, e).dump();
}

StreamElement element_from_json(const Schema& schema, const Json& j) {
  ObjectReader r(j, "");
  StreamElement e;
  e.timestamp = r.integer("timestamp");
  const Json& values = r.required("values");
  r.reject_unknown();
  if (!values.is_object()) throw SchemaError("/values", "expected an object");
  if (values.size() != schema.size()) {
    throw TypeMismatch("expected " + std::to_string(schema.size()) + " values, got " +
                       std::to_string(values.size()));
  }
  for (const auto& f : schema) {
    auto it = values.find(f.name());
    if (it == values.end()) throw TypeMismatch("missing value for field '" + f.name() + "'");
    e.values.push_back(value_from_json(*it, f.value_type(), "/values/" + f.name()));
  }
  return e;
}

StreamElement parse_stream_element(const Schema& schema, std::string_view text) {
  return element_from_json(schema, parse_json(text));
}

Json to_json(const SensorDescriptor& d) {
  Json j = Json::object();
  j["node_id"] = d.node_id;
  j["vs_name"] = d.vs_name;
  j["schema"] = to_json(d.schema);
  j["metadata"] = string_map_to_json(d.metadata);
  j["registered_at"] = d.registered_at;
  return j;
}

SensorDescriptor descriptor_from_json(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  SensorDescriptor d;
  d.node_id = r.string("node_id");
  d.vs_name = r.string("vs_name");
  d.schema = schema_from_json(r.required("schema"), child(pointer, "schema"));
  if (const Json* m = r.optional("metadata")) d.metadata = string_map_from_json(*m, child(pointer, "metadata"));
  d.registered_at = r.opt_integer("registered_at").value_or(0);
  r.reject_unknown();
  d.validate();
  return d;
}

Json to_json(const Subscription& s) {
  Json j = Json::object();
  j["id"] = s.id;
  j["vs_name"] = s.vs_name;
  j["mode"] = to_string(s.mode);
  if (s.delivery_endpoint) j["delivery_endpoint"] = *s.delivery_endpoint;
  j["interval_ms"] = s.interval_ms;
  j["expiry"] = s.expiry;
  j["created_at"] = s.created_at;
  j["payload"] = to_string(s.payload);
  if (s.window) j["window"] = to_json(*s.window);
  if (!s.aggregations.empty()) j["aggregations"] = to_json(s.aggregations);
  if (s.idempotency_key) j["idempotency_key"] = *s.idempotency_key;
  return j;
}

Subscription subscription_from_json(const Json& j) {
  ObjectReader r(j, "");
  Subscription s;
  s.id = r.opt_string("id").value_or("");
  s.vs_name = r.string("vs_name");
  auto mode = r.opt_string("mode").value_or("push");
  if (mode == "push") {
    s.mode = SubscriptionMode::Push;
  } else if (mode == "pull") {
    s.mode = SubscriptionMode::Pull;
  } else {
    throw SchemaError("/mode", "expected \"push\" or \"pull\"");
  }
  s.delivery_endpoint = r.opt_string("delivery_endpoint");
  s.interval_ms = r.integer("interval_ms");
  s.expiry = r.integer("expiry");
  s.created_at = r.opt_integer("created_at").value_or(0);
  auto payload = r.opt_string("payload").value_or("processed");
  if (payload == "processed") {
    s.payload = PayloadKind::Processed;
  } else if (payload == "raw") {
    s.payload = PayloadKind::Raw;
  } else {
    throw SchemaError("/payload", "expected \"processed\" or \"raw\"");
  }
  if (const Json* w = r.optional("window")) s.window = window_from_json(*w, "/window");
  if (const Json* a = r.optional("aggregations")) s.aggregations = aggregations_from_json(*a, "/aggregations");
  s.idempotency_key = r.opt_string("idempotency_key");
  r.reject_unknown();
  s.validate();
  return s;
}

Json to_json(const CostParameters& c) {
  Json j = Json::object();
  j["c_proc_per_sample"] = c.c_proc_per_sample;
  j["c_radio_wake"] = c.c_radio_wake;
  j["c_per_byte"] = c.c_per_byte;
  return j;
}

CostParameters cost_parameters_from_json(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  CostParameters c;
  c.c_proc_per_sample = ObjectReader::as_number(r.required("c_proc_per_sample"), child(pointer, "c_proc_per_sample"));
  c.c_radio_wake = ObjectReader::as_number(r.required("c_radio_wake"), child(pointer, "c_radio_wake"));
  c.c_per_byte = ObjectReader::as_number(r.required("c_per_byte"), child(pointer, "c_per_byte"));
  r.reject_unknown();
  c.validate();
  return c;
}

} // namespace mosden
