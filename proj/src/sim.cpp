#include "mosden/sim.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "mosden/errors.hpp"

namespace mosden {

std::string_view to_string(SimKind k) {
  switch (k) {
  case SimKind::Constant: return "constant";
  case SimKind::Ramp: return "ramp";
  case SimKind::Sine: return "sine";
  case SimKind::SeededNoise: return "seeded_noise";
  }
  return "?";
}

std::string_view to_string(FaultMode f) {
  switch (f) {
  case FaultMode::None: return "none";
  case FaultMode::WrongType: return "wrong_type";
  case FaultMode::Stall: return "stall";
  case FaultMode::DuplicateTimestamp: return "duplicate_timestamp";
  }
  return "?";
}

Schema SimProfile::schema() const { return {DataField(field, ValueType::Double, unit)}; }

namespace {

std::int64_t parse_int(const ConfigMap& config, const std::string& key, std::int64_t fallback) {
  auto it = config.find(key);
  if (it == config.end()) return fallback;
  std::int64_t v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw PluginRejectedConfig(key, "config key '" + key + "' must be an integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const ConfigMap& config, const std::string& key, double fallback) {
  auto it = config.find(key);
  if (it == config.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used == it->second.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw PluginRejectedConfig(key, "config key '" + key + "' must be a number, got '" + it->second + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

} // namespace

SimProfile sim_profile_from_config(const ConfigMap& config) {
  if (!config.count("seed")) throw PluginRejectedConfig("seed", "missing required config key 'seed'");
  SimProfile p;
  p.seed = parse_int(config, "seed", 0);
  if (auto it = config.find("kind"); it != config.end()) {
    if (it->second == "constant") p.kind = SimKind::Constant;
    else if (it->second == "ramp") p.kind = SimKind::Ramp;
    else if (it->second == "sine") p.kind = SimKind::Sine;
    else if (it->second == "seeded_noise") p.kind = SimKind::SeededNoise;
    else throw PluginRejectedConfig("kind", "unknown kind '" + it->second + "'");
  }
  p.period_ms = parse_int(config, "period_ms", p.period_ms);
  if (p.period_ms < 1) throw PluginRejectedConfig("period_ms", "period_ms must be >= 1");
  p.amplitude = parse_double(config, "amplitude", p.amplitude);
  p.offset = parse_double(config, "offset", p.offset);
  p.sampling_ms = parse_int(config, "sampling_ms", p.sampling_ms);
  if (p.sampling_ms < 1) throw PluginRejectedConfig("sampling_ms", "sampling_ms must be >= 1");
  if (auto it = config.find("field"); it != config.end()) {
    if (!is_identifier(it->second)) throw PluginRejectedConfig("field", "field must be an identifier");
    p.field = it->second;
  }
  if (auto it = config.find("unit"); it != config.end()) p.unit = it->second;
  if (auto it = config.find("fault_mode"); it != config.end()) {
    if (it->second == "none") p.fault_mode = FaultMode::None;
    else if (it->second == "wrong_type") p.fault_mode = FaultMode::WrongType;
    else if (it->second == "stall") p.fault_mode = FaultMode::Stall;
    else if (it->second == "duplicate_timestamp") p.fault_mode = FaultMode::DuplicateTimestamp;
    else throw PluginRejectedConfig("fault_mode", "unknown fault_mode '" + it->second + "'");
  }
  p.fault_after = parse_int(config, "fault_after", p.fault_after);
  p.stall_ms = parse_int(config, "stall_ms", p.stall_ms);
  if (auto it = config.find("timestamp_mode"); it != config.end()) {
    if (it->second == "clock") p.timestamp_mode = TimestampMode::Clock;
    else if (it->second == "synthetic") p.timestamp_mode = TimestampMode::Synthetic;
    else throw PluginRejectedConfig("timestamp_mode", "unknown timestamp_mode '" + it->second + "'");
  }
  p.start_ms = parse_int(config, "start_ms", p.start_ms);
  return p;
}

ConfigMap to_config(const SimProfile& p) {
  ConfigMap c;
  c["kind"] = to_string(p.kind);
  c["seed"] = std::to_string(p.seed);
  c["period_ms"] = std::to_string(p.period_ms);
  c["amplitude"] = format_double(p.amplitude);
  c["offset"] = format_double(p.offset);
  c["sampling_ms"] = std::to_string(p.sampling_ms);
  c["field"] = p.field;
  c["unit"] = p.unit;
  if (p.fault_mode != FaultMode::None) {
    c["fault_mode"] = to_string(p.fault_mode);
    c["fault_after"] = std::to_string(p.fault_after);
    c["stall_ms"] = std::to_string(p.stall_ms);
  }
  c["timestamp_mode"] = p.timestamp_mode == TimestampMode::Clock ? "clock" : "synthetic";
  c["start_ms"] = std::to_string(p.start_ms);
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sim_value(const SimProfile& p, std::int64_t call_index) {
  const auto i = static_cast<double>(call_index);
  switch (p.kind) {
  case SimKind::Constant: return p.offset;
  case SimKind::Ramp: return p.offset + i;
  case SimKind::Sine:
    return p.offset + p.amplitude * std::sin(2.0 * std::numbers::pi * (i * static_cast<double>(p.sampling_ms)) /
                                             static_cast<double>(p.period_ms));
  case SimKind::SeededNoise: {
    const auto bits = splitmix64(splitmix64(static_cast<std::uint64_t>(p.seed)) + static_cast<std::uint64_t>(call_index));
    const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53; // [0, 1)
    return p.offset + p.amplitude * (2.0 * unit - 1.0);
  }
  }
  return 0.0;
}

StreamElement next_value(const SimProfile& p, std::int64_t call_index) {
  return StreamElement{p.start_ms + call_index * p.sampling_ms, {sim_value(p, call_index)}};
}

void SimPlugin::set_configuration(const ConfigMap& config) { profile_ = sim_profile_from_config(config); }

Schema SimPlugin::get_data_structure() {
  if (!profile_) throw PluginProtocolError("get_data_structure before set_configuration");
  return profile_->schema();
}

std::optional<StreamElement> SimPlugin::get_readings() {
  if (!profile_) throw PluginProtocolError("get_readings before set_configuration");
  const auto& p = *profile_;
  const std::int64_t index = calls_++;
  auto element = next_value(p, index);
  if (p.timestamp_mode == TimestampMode::Clock) element.timestamp = clock_->now_ms();
  element.timestamp = std::max(element.timestamp, last_timestamp_);
  if (index == 0) first_timestamp_ = element.timestamp;
  last_timestamp_ = element.timestamp;

  if (p.fault_mode != FaultMode::None && index >= p.fault_after) {
    switch (p.fault_mode) {
    case FaultMode::WrongType: element.values[0] = std::string("fault"); break;
    case FaultMode::Stall: std::this_thread::sleep_for(std::chrono::milliseconds(p.stall_ms)); break;
    case FaultMode::DuplicateTimestamp:
      // Re-sends the first reading's timestamp, which the store sees as a
      // step backwards once time has moved on.
      if (index > 0) element.timestamp = first_timestamp_;
      break;
    case FaultMode::None: break;
    }
  }
  return element;
}

void register_sim_plugin(PluginCatalog& catalog) {
  catalog.register_in_process(std::string(kSimPluginId),
                              [](const PluginContext& ctx) { return std::make_unique<SimPlugin>(ctx.clock); });
}

PluginManifest write_sim_plugin_manifest(const std::filesystem::path& dir, const std::filesystem::path& executable,
                                         std::string plugin_id, std::int64_t size_bytes) {
  PluginManifest m;
  m.plugin_id = std::move(plugin_id);
  m.version = std::string(kSimPluginVersion);
  m.action = std::string(kPluginAction);
  m.size_bytes = size_bytes;
  m.categories = {"simulated", "temperature"};
  m.command = {std::filesystem::absolute(executable).string()};
  m.dir = dir;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "plugin.json");
  if (!out) throw IoError("cannot write " + (dir / "plugin.json").string());
  out << to_json(m).dump(2) << '\n';
  return m;
}

PluginBinding make_reference_binding(const SimProfile& profile, Transport transport,
                                     const std::filesystem::path& executable, std::string plugin_id) {
  PluginBinding b;
  b.plugin_id = std::move(plugin_id);
  b.transport = transport;
  b.config = to_config(profile);
  if (transport == Transport::Subprocess) b.command = {std::filesystem::absolute(executable).string()};
  return b;
}

} // namespace mosden
