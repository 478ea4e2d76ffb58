#pragma once

// Deterministic simulated sensors and the reference plugin built on them.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "mosden/model.hpp"
#include "mosden/plugin.hpp"

namespace mosden {

inline constexpr std::string_view kSimPluginId = "mosden.sim";
inline constexpr std::string_view kSimPluginVersion = "1.0.0";

enum class SimKind { Constant, Ramp, Sine, SeededNoise };
enum class FaultMode { None, WrongType, Stall, DuplicateTimestamp };
enum class TimestampMode { Clock, Synthetic };

std::string_view to_string(SimKind k);
std::string_view to_string(FaultMode f);

/// Immutable description of one simulated sensor.
///
/// Config keys (all string-valued, as carried by a VSD binding):
///   seed (required), kind, period_ms, amplitude, offset, sampling_ms,
///   field, unit, fault_mode, fault_after, stall_ms, timestamp_mode, start_ms.
/// Unknown keys are ignored so descriptive metadata can ride along.
struct SimProfile {
  SimKind kind = SimKind::Constant;
  std::int64_t seed = 0;
  std::int64_t period_ms = 60000;
  double amplitude = 1.0;
  double offset = 0.0;
  std::int64_t sampling_ms = 1000;
  std::string field = "temp";
  std::string unit = "celsius";
  FaultMode fault_mode = FaultMode::None;
  std::int64_t fault_after = 0; ///< first call index affected by the fault
  std::int64_t stall_ms = 3'600'000;
  TimestampMode timestamp_mode = TimestampMode::Clock;
  std::int64_t start_ms = 0;

  Schema schema() const;
  bool operator==(const SimProfile&) const = default;
};

/// Throws PluginRejectedConfig naming the offending key.
SimProfile sim_profile_from_config(const ConfigMap& config);
ConfigMap to_config(const SimProfile& p);

/// The reading value for call `call_index` (no faults applied).
double sim_value(const SimProfile& p, std::int64_t call_index);

/// Pure function of (profile, call_index). The timestamp is the synthetic
/// one: start_ms + call_index * sampling_ms.
StreamElement next_value(const SimProfile& p, std::int64_t call_index);

/// splitmix64 finaliser; the noise generator is defined in terms of it so
/// plugins in other languages can reproduce it bit for bit.
std::uint64_t splitmix64(std::uint64_t x);

/// Reference plugin. Requires the "seed" key; honours fault modes.
class SimPlugin final : public Plugin {
public:
  explicit SimPlugin(std::shared_ptr<Clock> clock = system_clock()) : clock_(std::move(clock)) {}

  void set_configuration(const ConfigMap& config) override;
  Schema get_data_structure() override;
  std::optional<StreamElement> get_readings() override;

  std::int64_t calls() const { return calls_; }

private:
  std::shared_ptr<Clock> clock_;
  std::optional<SimProfile> profile_;
  std::int64_t calls_ = 0;
  std::int64_t first_timestamp_ = 0;
  std::int64_t last_timestamp_ = INT64_MIN;
};

/// Registers the reference plugin under kSimPluginId.
void register_sim_plugin(PluginCatalog& catalog);

/// Writes `<dir>/plugin.json` for the subprocess reference plugin whose
/// executable is `executable`. Returns the manifest.
PluginManifest write_sim_plugin_manifest(const std::filesystem::path& dir, const std::filesystem::path& executable,
                                         std::string plugin_id = std::string(kSimPluginId),
                                         std::int64_t size_bytes = 25'000);

/// Binding for a reference plugin carrying `profile` over `transport`.
PluginBinding make_reference_binding(const SimProfile& profile, Transport transport,
                                     const std::filesystem::path& executable = {},
                                     std::string plugin_id = std::string(kSimPluginId));

} // namespace mosden
